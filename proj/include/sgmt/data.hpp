#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "sgmt/rng.hpp"

namespace sgmt {

inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;
inline constexpr int kFirstWordId = 4;

/// Default bound on caption words (BOS/EOS excluded).
inline constexpr int kDefaultMaxCaptionLen = 50;

/// Square multi-channel patch, channel-major, values in [0, 1].
struct PatchImage {
    int channels = 3;
    int size = 0;  // w_p
    std::vector<float> pixels;

    PatchImage() = default;
    PatchImage(int channels, int size);

    float& at(int c, int y, int x) { return pixels[(static_cast<std::size_t>(c) * size + y) * size + x]; }
    float at(int c, int y, int x) const { return pixels[(static_cast<std::size_t>(c) * size + y) * size + x]; }

    /// Throws data_error when shape or value invariants are violated.
    void validate() const;

    bool operator==(const PatchImage&) const = default;
};

/// Token ids including the leading BOS and the trailing EOS.
struct Caption {
    std::vector<int> tokens;

    /// Number of predicted positions (every token after BOS).
    int target_length() const { return static_cast<int>(tokens.size()) - 1; }
    /// Content words between BOS and EOS.
    int word_count() const { return static_cast<int>(tokens.size()) - 2; }
    std::vector<int> words() const;

    void validate(int max_caption_len = kDefaultMaxCaptionLen) const;

    bool operator==(const Caption&) const = default;
};

struct WSIRecord {
    std::string id;
    std::vector<PatchImage> patches;
    std::string caption;  // surface string; tokenized through a Vocabulary
    int subtype = 0;

    bool operator==(const WSIRecord&) const = default;
};

/// Lowercases, detaches . , ; : and splits on whitespace.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
public:
    Vocabulary();

    int size() const { return static_cast<int>(id_to_token_.size()); }
    int encode(const std::string& word) const;
    const std::string& decode(int id) const;
    bool contains(const std::string& word) const { return token_to_id_.count(word) != 0; }

    /// BOS + ids + EOS, truncated to max_caption_len words.
    Caption encode_caption(std::string_view text, int max_caption_len = kDefaultMaxCaptionLen) const;
    /// Space-joined words with BOS/EOS/PAD stripped.
    std::string decode_caption(const Caption& caption) const;
    std::vector<std::string> caption_words(const Caption& caption) const;

    const std::vector<std::string>& tokens() const { return id_to_token_; }

    std::string to_json() const;
    static Vocabulary from_json(const std::string& text);
    void save(const std::filesystem::path& path) const;
    static Vocabulary load(const std::filesystem::path& path);

    bool operator==(const Vocabulary& other) const { return id_to_token_ == other.id_to_token_; }

private:
    friend Vocabulary build_vocabulary(const std::vector<std::string>&, int);
    void add(const std::string& word);

    std::map<std::string, int> token_to_id_;
    std::vector<std::string> id_to_token_;
};

/// Ids ordered by descending count, ties broken lexicographically.
Vocabulary build_vocabulary(const std::vector<std::string>& captions, int min_count = 1);

// ---------------------------------------------------------------------------
// Synthetic slides

struct SubtypeTexture {
    double orientation = 0.0;  // radians
    double frequency = 0.1;    // cycles per pixel
    double noise = 0.05;       // base per-pixel noise std
    std::array<double, 3> tint{1.0, 1.0, 1.0};
};

/// Modifier slot filled from one latent per-slide texture parameter.
struct ModifierSlot {
    std::string name;                  // placeholder is "{name}"
    std::array<std::string, 2> words;  // low / high level
};

struct SyntheticSpec {
    int K = 4;
    int num_slides = 200;
    int patches_min = 16;
    int patches_max = 96;
    int patch_size = 16;
    int channels = 3;
    std::uint64_t seed = 7;

    double amplitude = 0.28;
    double orientation_jitter = 0.35;
    std::array<double, 2> brightness_levels{0.42, 0.58};
    double brightness_jitter = 0.08;
    std::array<double, 2> noise_multipliers{1.0, 2.2};
    double noise_jitter = 0.35;

    std::vector<SubtypeTexture> textures;  // size K
    std::vector<std::string> templates;    // size K, containing "{stain}" and "{atypia}"
    std::vector<ModifierSlot> slots;

    void validate() const;
};

/// Spec with textures, templates and modifier slots filled for `K` subtypes.
SyntheticSpec default_synthetic_spec(int K = 4, std::uint64_t seed = 7);

/// Number of built-in subtype templates (upper bound on K for defaults).
int builtin_template_count();

/// The caption for a subtype with the given per-slot levels (0 or 1).
std::string instantiate_caption(const SyntheticSpec& spec, int subtype, const std::vector<int>& levels);

/// Every caption the grammar can emit for the spec's K subtypes.
std::vector<std::string> enumerate_captions(const SyntheticSpec& spec);

std::vector<WSIRecord> generate_synthetic(const SyntheticSpec& spec);

/// Adds clamped Gaussian noise of standard deviation `sigma` to every pixel.
PatchImage corrupt_patch(const PatchImage& patch, double sigma, Rng& rng);

// ---------------------------------------------------------------------------
// Dataset persistence: manifest.json plus one little-endian float32 blob per patch.

void save_dataset(const std::vector<WSIRecord>& records, const std::filesystem::path& dir);
std::vector<WSIRecord> load_dataset(const std::filesystem::path& dir);

} // namespace sgmt
