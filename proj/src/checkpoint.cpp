#include <bit>
#include <fstream>
#include <sstream>

#include "json_io.hpp"
#include "sgmt/training.hpp"

namespace sgmt {

namespace fs = std::filesystem;

namespace {

constexpr const char* kBlobName = "params.f32";

std::uint32_t to_little(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        v = ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
    }
    return v;
}

struct Group {
    const char* tag;
    const NamedArrays* arrays;
};

std::vector<LossRecord> read_loss_csv(const fs::path& path) {
    std::vector<LossRecord> out;
    std::ifstream in(path);
    if (!in) return out;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        LossRecord r;
        if (std::sscanf(line.c_str(), "%ld,%lf,%lf,%lf", &r.step, &r.loss, &r.caption_loss, &r.subtype_loss) != 4)
            throw data_error("checkpoint: malformed loss history line: " + line);
        out.push_back(r);
    }
    return out;
}

} // namespace

void save_checkpoint(const Checkpoint& checkpoint, const fs::path& dir) {
    fs::create_directories(dir);
    const TrainState& state = checkpoint.state;
    json_io::Json manifest;
    manifest["format"] = "sgmt-checkpoint";
    manifest["version"] = 1;
    manifest["model"] = json_io::to_json(checkpoint.model_cfg);
    manifest["train"] = json_io::to_json(checkpoint.train_cfg);
    manifest["step"] = state.step;
    manifest["epoch"] = state.epoch;
    manifest["rng_state"] = state.rng.state();
    manifest["blob"] = kBlobName;
    manifest["vocab"] = "vocab.json";

    std::vector<std::uint32_t> blob;
    blob.reserve(state.params.total_size() * 3);
    auto tensors = json_io::Json::array();
    const Group groups[] = {{"param", &state.params}, {"adam_m", &state.first_moment}, {"adam_v", &state.second_moment}};
    for (const auto& group : groups) {
        for (std::size_t i = 0; i < group.arrays->count(); ++i) {
            const Matrix& m = group.arrays->value(i);
            json_io::Json t;
            t["name"] = group.arrays->name(i);
            t["group"] = group.tag;
            t["shape"] = {m.rows(), m.cols()};
            t["offset"] = blob.size() * 4;
            tensors.push_back(t);
            for (Eigen::Index j = 0; j < m.size(); ++j)
                blob.push_back(to_little(std::bit_cast<std::uint32_t>(static_cast<float>(m.data()[j]))));
        }
    }
    manifest["tensors"] = tensors;

    std::ofstream out_blob(dir / kBlobName, std::ios::binary);
    if (!out_blob) throw data_error("cannot write checkpoint blob in " + dir.string());
    out_blob.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size() * 4));
    std::ofstream out_manifest(dir / "manifest.json");
    if (!out_manifest) throw data_error("cannot write checkpoint manifest in " + dir.string());
    out_manifest << manifest.dump(1) << '\n';
    checkpoint.vocab.save(dir / "vocab.json");
    write_loss_csv(state.history, dir / "loss.csv");
}

Checkpoint load_checkpoint(const fs::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw data_error("cannot read checkpoint manifest in " + dir.string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw data_error("checkpoint: malformed manifest: " + std::string(e.what()));
    }
    Checkpoint ck;
    try {
        json_io::Section model(manifest.at("model"), "model");
        json_io::read(model, ck.model_cfg);
        json_io::Section train(manifest.at("train"), "train");
        json_io::read(train, ck.train_cfg);
        ck.state.step = manifest.at("step").get<long>();
        ck.state.epoch = manifest.at("epoch").get<int>();
        ck.state.rng.set_state(manifest.at("rng_state").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw data_error("checkpoint: " + std::string(e.what()));
    } catch (const Error& e) {
        throw data_error("checkpoint: " + std::string(e.what()));
    }

    Rng scratch(0);
    ck.state.params = init_params(ck.model_cfg, scratch);
    ck.state.first_moment = ck.state.params.zeros_like();
    ck.state.second_moment = ck.state.params.zeros_like();

    std::ifstream blob_in(dir / kBlobName, std::ios::binary | std::ios::ate);
    if (!blob_in) throw data_error("checkpoint: missing blob");
    const auto bytes = static_cast<std::size_t>(blob_in.tellg());
    blob_in.seekg(0);
    std::vector<std::uint32_t> blob(bytes / 4);
    blob_in.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(blob.size() * 4));

    std::size_t loaded = 0;
    for (const auto& t : manifest.at("tensors")) {
        const auto name = t.at("name").get<std::string>();
        const auto group = t.at("group").get<std::string>();
        NamedArrays* target = group == "param"    ? &ck.state.params
                              : group == "adam_m" ? &ck.state.first_moment
                              : group == "adam_v" ? &ck.state.second_moment
                                                  : nullptr;
        if (target == nullptr) throw data_error("checkpoint: unknown tensor group " + group);
        if (!target->contains(name)) throw data_error("checkpoint: unexpected parameter " + name);
        Matrix& m = target->at(name);
        const auto shape = t.at("shape").get<std::vector<long>>();
        if (shape.size() != 2 || shape[0] != m.rows() || shape[1] != m.cols())
            throw data_error("checkpoint: shape mismatch for " + name);
        const auto offset = t.at("offset").get<std::size_t>();
        if (offset % 4 != 0 || offset / 4 + static_cast<std::size_t>(m.size()) > blob.size())
            throw data_error("checkpoint: blob too short for " + name);
        for (Eigen::Index j = 0; j < m.size(); ++j)
            m.data()[j] = static_cast<double>(std::bit_cast<float>(to_little(blob[offset / 4 + j])));
        ++loaded;
    }
    if (loaded != 3 * ck.state.params.count()) throw data_error("checkpoint: tensor list is incomplete");
    ck.vocab = Vocabulary::load(dir / "vocab.json");
    ck.state.history = read_loss_csv(dir / "loss.csv");
    return ck;
}

} // namespace sgmt
