#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "sgmt/data.hpp"
#include "sgmt/error.hpp"

namespace sgmt {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

std::uint32_t to_little(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        v = ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
    }
    return v;
}

void write_f32(const fs::path& path, const std::vector<float>& values) {
    std::vector<std::uint32_t> raw(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) raw[i] = to_little(std::bit_cast<std::uint32_t>(values[i]));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
}

bool read_f32(const fs::path& path, std::vector<float>& values) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) return false;
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes != values.size() * 4) return false;
    in.seekg(0);
    std::vector<std::uint32_t> raw(values.size());
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
    if (!in) return false;
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = std::bit_cast<float>(to_little(raw[i]));
    return true;
}

} // namespace

void save_dataset(const std::vector<WSIRecord>& records, const fs::path& dir) {
    fs::create_directories(dir);
    nlohmann::ordered_json manifest;
    manifest["format"] = "sgmt-dataset";
    manifest["version"] = 1;
    manifest["records"] = nlohmann::ordered_json::array();
    for (const auto& record : records) {
        if (record.patches.empty()) throw data_error("record " + record.id + " has no patches");
        nlohmann::ordered_json entry;
        entry["id"] = record.id;
        entry["subtype"] = record.subtype;
        entry["caption"] = record.caption;
        entry["w_p"] = record.patches.front().size;
        entry["channels"] = record.patches.front().channels;
        auto files = nlohmann::ordered_json::array();
        for (std::size_t k = 0; k < record.patches.size(); ++k) {
            const auto& patch = record.patches[k];
            if (patch.size != record.patches.front().size || patch.channels != record.patches.front().channels)
                throw data_error("record " + record.id + " mixes patch shapes");
            const std::string name = record.id + "_" + std::to_string(k) + ".f32";
            write_f32(dir / name, patch.pixels);
            files.push_back(name);
        }
        entry["patches"] = files;
        manifest["records"].push_back(entry);
    }
    std::ofstream out(dir / "manifest.json");
    if (!out) throw data_error("cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(1) << '\n';
}

std::vector<WSIRecord> load_dataset(const fs::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw data_error("cannot read " + (dir / "manifest.json").string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw data_error("malformed dataset manifest: " + std::string(e.what()));
    }
    if (!manifest.is_object() || !manifest.contains("records") || !manifest["records"].is_array())
        throw data_error("malformed dataset manifest: missing records array");

    std::vector<WSIRecord> records;
    const auto& entries = manifest["records"];
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const std::string where = "record " + std::to_string(i) + ": ";
        try {
            const auto& entry = entries[i];
            WSIRecord record;
            record.id = entry.at("id").get<std::string>();
            record.subtype = entry.at("subtype").get<int>();
            record.caption = entry.at("caption").get<std::string>();
            const int w = entry.at("w_p").get<int>();
            const int channels = entry.at("channels").get<int>();
            if (w < 4 || channels < 1) throw data_error("invalid patch shape");
            if (record.subtype < 0) throw data_error("negative subtype");
            const auto& files = entry.at("patches");
            if (!files.is_array() || files.empty()) throw data_error("no patches");
            for (const auto& file : files) {
                PatchImage patch(channels, w);
                const auto name = file.get<std::string>();
                if (!read_f32(dir / name, patch.pixels)) throw data_error("unreadable or truncated blob " + name);
                record.patches.push_back(std::move(patch));
            }
            records.push_back(std::move(record));
        } catch (const nlohmann::json::exception& e) {
            throw data_error(where + e.what());
        } catch (const Error& e) {
            throw data_error(where + e.what());
        }
    }
    return records;
}

} // namespace sgmt
