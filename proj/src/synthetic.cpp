#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>

#include "sgmt/data.hpp"
#include "sgmt/error.hpp"
#include "sgmt/rng.hpp"

namespace sgmt {

namespace {

// Diagnostic phrases for the built-in subtypes, loosely following gastric
// adenocarcinoma nomenclature.
const std::vector<std::string> kDiagnoses{
    "well differentiated tubular adenocarcinoma",
    "moderately differentiated tubular adenocarcinoma",
    "poorly differentiated adenocarcinoma , solid type",
    "signet ring cell carcinoma",
    "mucinous adenocarcinoma",
    "papillary adenocarcinoma",
    "poorly differentiated adenocarcinoma , non solid type",
    "hepatoid adenocarcinoma",
    "adenocarcinoma with lymphoid stroma",
    "mixed tubular and signet ring cell carcinoma",
    "tubular adenoma with high grade dysplasia",
    "undifferentiated carcinoma",
};

constexpr std::array<double, 4> kFrequencies{0.09, 0.17, 0.26, 0.36};
constexpr std::array<std::array<double, 3>, 3> kTints{{
    {0.95, 0.55, 0.80},
    {0.65, 0.45, 0.95},
    {0.90, 0.75, 0.50},
}};

std::string replace_all(std::string text, const std::string& from, const std::string& to) {
    std::size_t pos = 0;
    while ((pos = text.find(from, pos)) != std::string::npos) {
        text.replace(pos, from.size(), to);
        pos += to.size();
    }
    return text;
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

} // namespace

int builtin_template_count() { return static_cast<int>(kDiagnoses.size()); }

SyntheticSpec default_synthetic_spec(int K, std::uint64_t seed) {
    if (K < 2 || K > builtin_template_count())
        throw config_error("default synthetic spec supports K in [2, " +
                           std::to_string(builtin_template_count()) + "]");
    SyntheticSpec spec;
    spec.K = K;
    spec.seed = seed;
    for (int k = 0; k < K; ++k) {
        SubtypeTexture tex;
        // (k mod 4, k mod 3) pairs are distinct for k < 12.
        tex.frequency = kFrequencies[static_cast<std::size_t>(k % 4)];
        tex.tint = kTints[static_cast<std::size_t>(k % 3)];
        tex.orientation = std::numbers::pi * k / K;
        tex.noise = 0.04 + 0.01 * (k % 2);
        spec.textures.push_back(tex);
        spec.templates.push_back("{stain} biopsy specimen showing " + kDiagnoses[static_cast<std::size_t>(k)] +
                                 " , with {atypia} nuclear atypia .");
    }
    spec.slots = {
        ModifierSlot{"stain", {"pale", "dark"}},
        ModifierSlot{"atypia", {"mild", "marked"}},
    };
    return spec;
}

void SyntheticSpec::validate() const {
    if (K < 2) throw config_error("synthetic spec: K must be at least 2");
    if (patches_min < 1) throw config_error("synthetic spec: patches_min must be at least 1");
    if (patches_max < patches_min) throw config_error("synthetic spec: patches_max < patches_min");
    if (patch_size < 4) throw config_error("synthetic spec: patch_size must be at least 4");
    if (channels < 1 || channels > 3) throw config_error("synthetic spec: channels must be in [1, 3]");
    if (num_slides < 0) throw config_error("synthetic spec: num_slides must be non-negative");
    if (static_cast<int>(textures.size()) != K) throw config_error("synthetic spec: need one texture per subtype");
    if (static_cast<int>(templates.size()) != K) throw config_error("synthetic spec: need one template per subtype");
    if (slots.size() != 2) throw config_error("synthetic spec: expected the stain and atypia slots");
    const std::set<std::string> distinct(templates.begin(), templates.end());
    if (distinct.size() != templates.size()) throw config_error("synthetic spec: templates must be distinct");
    for (const auto& t : templates) {
        for (const auto& slot : slots) {
            if (t.find("{" + slot.name + "}") == std::string::npos)
                throw config_error("synthetic spec: template lacks slot {" + slot.name + "}");
        }
    }
}

std::string instantiate_caption(const SyntheticSpec& spec, int subtype, const std::vector<int>& levels) {
    std::string text = spec.templates.at(static_cast<std::size_t>(subtype));
    for (std::size_t i = 0; i < spec.slots.size(); ++i) {
        const auto& slot = spec.slots[i];
        text = replace_all(text, "{" + slot.name + "}", slot.words.at(static_cast<std::size_t>(levels.at(i))));
    }
    return text;
}

std::vector<std::string> enumerate_captions(const SyntheticSpec& spec) {
    std::vector<std::string> out;
    const int combos = 1 << spec.slots.size();
    for (int k = 0; k < spec.K; ++k) {
        for (int mask = 0; mask < combos; ++mask) {
            std::vector<int> levels;
            for (std::size_t i = 0; i < spec.slots.size(); ++i) levels.push_back((mask >> i) & 1);
            out.push_back(instantiate_caption(spec, k, levels));
        }
    }
    return out;
}

std::vector<WSIRecord> generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);

    std::vector<int> subtypes(static_cast<std::size_t>(spec.num_slides));
    for (int i = 0; i < spec.num_slides; ++i) subtypes[static_cast<std::size_t>(i)] = i % spec.K;
    for (std::size_t i = subtypes.size(); i > 1; --i) std::swap(subtypes[i - 1], subtypes[rng.below(i)]);

    std::vector<WSIRecord> records;
    records.reserve(subtypes.size());
    const int w = spec.patch_size;
    for (std::size_t s = 0; s < subtypes.size(); ++s) {
        WSIRecord record;
        char id[32];
        std::snprintf(id, sizeof(id), "slide_%05zu", s);
        record.id = id;
        record.subtype = subtypes[s];
        const auto& tex = spec.textures[static_cast<std::size_t>(record.subtype)];

        const int stain = rng.bernoulli(0.5) ? 1 : 0;
        const int atypia = rng.bernoulli(0.5) ? 1 : 0;
        record.caption = instantiate_caption(spec, record.subtype, {stain, atypia});

        const double theta = tex.orientation + rng.uniform(-spec.orientation_jitter, spec.orientation_jitter);
        const double freq = tex.frequency * rng.uniform(0.95, 1.05);
        const double sigma_slide = tex.noise * spec.noise_multipliers[static_cast<std::size_t>(atypia)];
        const int n = rng.between(spec.patches_min, spec.patches_max);

        for (int p = 0; p < n; ++p) {
            PatchImage patch(spec.channels, w);
            const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
            const double theta_p = theta + rng.uniform(-0.05, 0.05);
            const double bright =
                spec.brightness_levels[static_cast<std::size_t>(stain)] + spec.brightness_jitter * rng.normal();
            const double sigma = sigma_slide * (1.0 + rng.uniform(-spec.noise_jitter, spec.noise_jitter));
            const double cx = std::cos(theta_p), sy = std::sin(theta_p);
            for (int c = 0; c < spec.channels; ++c) {
                const double tint = tex.tint[static_cast<std::size_t>(c)];
                for (int y = 0; y < w; ++y) {
                    for (int x = 0; x < w; ++x) {
                        const double wave = std::sin(2.0 * std::numbers::pi * freq * (x * cx + y * sy) + phase);
                        patch.at(c, y, x) = clamp01(tint * (bright + spec.amplitude * wave) + sigma * rng.normal());
                    }
                }
            }
            record.patches.push_back(std::move(patch));
        }
        records.push_back(std::move(record));
    }
    return records;
}

PatchImage corrupt_patch(const PatchImage& patch, double sigma, Rng& rng) {
    PatchImage out = patch;
    for (auto& v : out.pixels) v = clamp01(v + sigma * rng.normal());
    return out;
}

} // namespace sgmt
