#include "sgmt/sampler.hpp"

#include <cmath>
#include <numeric>

#include "sgmt/error.hpp"

namespace sgmt {

namespace {

SampledSet draw(int n, int cap, const SamplerConfig& cfg, Rng& rng) {
    if (n <= 0) throw data_error("empty patch set");
    const int m = std::min(cap, n);
    std::vector<int> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), 0);
    // Partial Fisher-Yates: the first m slots are a uniform ordered sample.
    for (int i = 0; i < m; ++i) {
        const auto j = static_cast<std::size_t>(i) + rng.below(static_cast<std::uint64_t>(n - i));
        std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
    }
    pool.resize(static_cast<std::size_t>(m));

    std::vector<Augmentation> choices{Augmentation::identity};
    if (cfg.augment_flips) {
        choices.push_back(Augmentation::hflip);
        choices.push_back(Augmentation::vflip);
    }
    if (cfg.augment_rot90) {
        choices.push_back(Augmentation::rot90);
        choices.push_back(Augmentation::rot180);
        choices.push_back(Augmentation::rot270);
    }
    SampledSet set;
    set.indices = std::move(pool);
    set.augmentations.reserve(set.indices.size());
    for (std::size_t i = 0; i < set.indices.size(); ++i) {
        set.augmentations.push_back(choices.size() == 1 ? Augmentation::identity
                                                        : choices[rng.below(choices.size())]);
    }
    return set;
}

} // namespace

std::string_view augmentation_name(Augmentation tag) {
    switch (tag) {
        case Augmentation::identity: return "identity";
        case Augmentation::hflip: return "hflip";
        case Augmentation::vflip: return "vflip";
        case Augmentation::rot90: return "rot90";
        case Augmentation::rot180: return "rot180";
        case Augmentation::rot270: return "rot270";
    }
    return "unknown";
}

void SamplerConfig::validate() const {
    if (M < 1) throw config_error("sampler: M must be at least 1");
    if (!(alpha > 1.0)) throw config_error("sampler: alpha must exceed 1");
    if (infer_limit < 0) throw config_error("sampler: infer_limit must be non-negative");
}

int SamplerConfig::infer_cap() const {
    if (infer_limit > 0) return infer_limit;
    return static_cast<int>(std::floor(alpha * M));
}

SampledSet sample_train(int n, const SamplerConfig& cfg, Rng& rng) { return draw(n, cfg.M, cfg, rng); }

SampledSet sample_infer(int n, const SamplerConfig& cfg, Rng& rng) { return draw(n, cfg.infer_cap(), cfg, rng); }

PatchImage apply_augmentation(const PatchImage& patch, Augmentation tag) {
    if (tag == Augmentation::identity) return patch;
    const int w = patch.size;
    if (static_cast<std::size_t>(patch.channels) * w * w != patch.pixels.size())
        throw data_error("augmentation requires a square patch");
    PatchImage out(patch.channels, w);
    for (int c = 0; c < patch.channels; ++c) {
        for (int y = 0; y < w; ++y) {
            for (int x = 0; x < w; ++x) {
                int sy = y, sx = x;
                switch (tag) {
                    case Augmentation::hflip: sx = w - 1 - x; break;
                    case Augmentation::vflip: sy = w - 1 - y; break;
                    // Counter-clockwise quarter turn.
                    case Augmentation::rot90: sy = x; sx = w - 1 - y; break;
                    case Augmentation::rot180: sy = w - 1 - y; sx = w - 1 - x; break;
                    case Augmentation::rot270: sy = w - 1 - x; sx = y; break;
                    case Augmentation::identity: break;
                }
                out.at(c, y, x) = patch.at(c, sy, sx);
            }
        }
    }
    return out;
}

std::vector<SampledSet> make_vote_sets(int n, int k, const SamplerConfig& cfg, Rng& rng) {
    if (k < 1) throw config_error("vote set count must be at least 1");
    std::vector<SampledSet> sets;
    sets.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) sets.push_back(sample_infer(n, cfg, rng));
    return sets;
}

std::vector<PatchImage> materialize(const WSIRecord& record, const SampledSet& set) {
    std::vector<PatchImage> out;
    out.reserve(set.indices.size());
    for (std::size_t i = 0; i < set.indices.size(); ++i) {
        out.push_back(apply_augmentation(record.patches.at(static_cast<std::size_t>(set.indices[i])),
                                         set.augmentations[i]));
    }
    return out;
}

} // namespace sgmt
