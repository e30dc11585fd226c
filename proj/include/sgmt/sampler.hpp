#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "sgmt/data.hpp"
#include "sgmt/rng.hpp"

namespace sgmt {

/// Dihedral transforms reachable by flips and quarter turns.
enum class Augmentation : std::uint8_t { identity, hflip, vflip, rot90, rot180, rot270 };

std::string_view augmentation_name(Augmentation tag);

struct SamplerConfig {
    int M = 32;           // training cap
    double alpha = 2.0;   // inference multiplier
    bool augment_flips = true;
    bool augment_rot90 = true;
    /// When positive, replaces floor(alpha * M) as the inference cap.
    int infer_limit = 0;

    void validate() const;
    int infer_cap() const;
};

struct SampledSet {
    std::vector<int> indices;
    std::vector<Augmentation> augmentations;  // one per index

    bool operator==(const SampledSet&) const = default;
};

/// min(M, n) distinct indices in uniformly random order.
SampledSet sample_train(int n, const SamplerConfig& cfg, Rng& rng);
/// min(infer_cap, n) distinct indices in uniformly random order.
SampledSet sample_infer(int n, const SamplerConfig& cfg, Rng& rng);

PatchImage apply_augmentation(const PatchImage& patch, Augmentation tag);

/// k independent sample_infer draws.
std::vector<SampledSet> make_vote_sets(int n, int k, const SamplerConfig& cfg, Rng& rng);

/// Gathers and augments the selected patches of a record.
std::vector<PatchImage> materialize(const WSIRecord& record, const SampledSet& set);

} // namespace sgmt
