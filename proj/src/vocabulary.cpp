#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

#include "sgmt/data.hpp"
#include "sgmt/error.hpp"

namespace sgmt {

namespace {

const std::array<std::string, 4> kReservedNames{"<pad>", "<bos>", "<eos>", "<unk>"};

bool is_detached(char c) { return c == '.' || c == ',' || c == ';' || c == ':'; }

} // namespace

PatchImage::PatchImage(int channels_, int size_)
    : channels(channels_), size(size_),
      pixels(static_cast<std::size_t>(channels_) * size_ * size_, 0.0f) {}

void PatchImage::validate() const {
    if (channels < 1) throw data_error("patch has no channels");
    if (size < 4) throw data_error("patch size must be at least 4");
    if (pixels.size() != static_cast<std::size_t>(channels) * size * size)
        throw data_error("patch pixel count does not match its shape");
    for (const float v : pixels) {
        if (!std::isfinite(v) || v < 0.0f || v > 1.0f) throw data_error("patch pixel outside [0,1]");
    }
}

std::vector<int> Caption::words() const {
    if (tokens.size() < 2) return {};
    return {tokens.begin() + 1, tokens.end() - 1};
}

void Caption::validate(int max_caption_len) const {
    if (tokens.size() < 2) throw data_error("caption must contain BOS and EOS");
    if (tokens.front() != kBosId) throw data_error("caption must begin with BOS");
    if (tokens.back() != kEosId) throw data_error("caption must end with EOS");
    if (word_count() > max_caption_len) throw data_error("caption exceeds max_caption_len");
    for (std::size_t i = 1; i + 1 < tokens.size(); ++i) {
        if (tokens[i] == kPadId || tokens[i] == kBosId || tokens[i] == kEosId)
            throw data_error("caption contains a reserved id between BOS and EOS");
    }
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) out.push_back(std::move(current));
        current.clear();
    };
    for (const char raw : text) {
        const auto c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
        if (std::isspace(static_cast<unsigned char>(c))) {
            flush();
        } else if (is_detached(c)) {
            flush();
            out.emplace_back(1, c);
        } else {
            current.push_back(c);
        }
    }
    flush();
    return out;
}

Vocabulary::Vocabulary() {
    for (const auto& name : kReservedNames) add(name);
}

void Vocabulary::add(const std::string& word) {
    token_to_id_.emplace(word, static_cast<int>(id_to_token_.size()));
    id_to_token_.push_back(word);
}

int Vocabulary::encode(const std::string& word) const {
    const auto it = token_to_id_.find(word);
    if (it == token_to_id_.end() || it->second < kFirstWordId) return kUnkId;
    return it->second;
}

const std::string& Vocabulary::decode(int id) const {
    if (id < 0 || id >= size()) return id_to_token_[kUnkId];
    return id_to_token_[static_cast<std::size_t>(id)];
}

Caption Vocabulary::encode_caption(std::string_view text, int max_caption_len) const {
    Caption caption;
    caption.tokens.push_back(kBosId);
    for (const auto& word : tokenize(text)) {
        if (static_cast<int>(caption.tokens.size()) - 1 >= max_caption_len) break;
        caption.tokens.push_back(encode(word));
    }
    caption.tokens.push_back(kEosId);
    return caption;
}

std::vector<std::string> Vocabulary::caption_words(const Caption& caption) const {
    std::vector<std::string> out;
    for (const int id : caption.tokens) {
        if (id == kPadId || id == kBosId || id == kEosId) continue;
        out.push_back(decode(id));
    }
    return out;
}

std::string Vocabulary::decode_caption(const Caption& caption) const {
    std::string out;
    for (const auto& word : caption_words(caption)) {
        if (!out.empty()) out.push_back(' ');
        out += word;
    }
    return out;
}

std::string Vocabulary::to_json() const {
    nlohmann::ordered_json reserved = nlohmann::ordered_json::object();
    for (int i = 0; i < kFirstWordId; ++i) reserved[kReservedNames[static_cast<std::size_t>(i)]] = i;
    nlohmann::ordered_json words = nlohmann::ordered_json::object();
    for (std::size_t i = kFirstWordId; i < id_to_token_.size(); ++i) words[id_to_token_[i]] = i;
    nlohmann::ordered_json doc;
    doc["reserved"] = reserved;
    doc["tokens"] = words;
    return doc.dump(2);
}

Vocabulary Vocabulary::from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw data_error(std::string("vocabulary: ") + e.what());
    }
    if (!doc.contains("reserved") || !doc.contains("tokens"))
        throw data_error("vocabulary: missing 'reserved' or 'tokens'");
    for (int i = 0; i < kFirstWordId; ++i) {
        const auto& name = kReservedNames[static_cast<std::size_t>(i)];
        if (!doc["reserved"].contains(name) || doc["reserved"][name].get<int>() != i)
            throw data_error("vocabulary: reserved id mismatch for " + name);
    }
    std::vector<std::string> ordered(doc["tokens"].size());
    for (const auto& [word, id_json] : doc["tokens"].items()) {
        const int id = id_json.get<int>();
        const auto slot = static_cast<std::size_t>(id - kFirstWordId);
        if (id < kFirstWordId || slot >= ordered.size() || !ordered[slot].empty())
            throw data_error("vocabulary: ids are not a dense range starting at 4");
        ordered[slot] = word;
    }
    Vocabulary vocab;
    for (const auto& word : ordered) vocab.add(word);
    return vocab;
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write vocabulary " + path.string());
    out << to_json() << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot read vocabulary " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return from_json(buffer.str());
}

Vocabulary build_vocabulary(const std::vector<std::string>& captions, int min_count) {
    if (captions.empty()) throw data_error("empty caption corpus");
    std::unordered_map<std::string, int> counts;
    for (const auto& caption : captions) {
        for (auto& word : tokenize(caption)) ++counts[word];
    }
    std::vector<std::pair<std::string, int>> ranked;
    for (auto& [word, count] : counts) {
        if (count >= min_count) ranked.emplace_back(word, count);
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    Vocabulary vocab;
    for (const auto& entry : ranked) {
        if (!vocab.contains(entry.first)) vocab.add(entry.first);
    }
    return vocab;
}

} // namespace sgmt
