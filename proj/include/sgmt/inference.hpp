#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sgmt/data.hpp"
#include "sgmt/model.hpp"
#include "sgmt/rng.hpp"
#include "sgmt/sampler.hpp"

namespace sgmt {

struct VoteConfig {
    int k = 5;
    std::string tie_break = "lexicographic";  // the only rule implemented
    std::uint64_t seed = 0;
    /// Std of Gaussian pixel noise added to every sampled patch (evaluation stress test).
    double patch_noise = 0.0;

    void validate() const;
};

/// Argmax decoding from BOS. PAD and BOS are never emitted; a caption that
/// reaches `max_len` words without EOS is closed with EOS.
Caption greedy_decode(const Matrix& encoder_states, const ModelParams& params, const ModelConfig& cfg, int max_len);

struct CaptionResult {
    Caption caption;
    int subtype = 0;
};

/// One inference draw: sample_infer, augment, optional per-pixel noise of
/// std `patch_noise`, encode, greedy decode, argmax subtype.
CaptionResult caption_once(const WSIRecord& record, const ModelParams& params, const ModelConfig& model_cfg,
                           const SamplerConfig& sampler_cfg, Rng& rng, double patch_noise = 0.0);

/// Captions a fixed patch list without sampling.
CaptionResult caption_patches(std::span<const PatchImage> patches, const ModelParams& params,
                              const ModelConfig& model_cfg);

/// Modal caption by exact token identity; ties go to the lexicographically
/// smallest detokenized string.
Caption vote(std::span<const Caption> captions, const Vocabulary& vocab);

/// Modal class index; ties go to the smallest index.
int vote_subtype(std::span<const int> subtypes);

struct VoteResult {
    Caption caption;
    int subtype = 0;
    std::vector<CaptionResult> members;
};

/// k independent caption_once draws from a generator seeded with `vote_cfg.seed`, then vote.
VoteResult caption_with_voting(const WSIRecord& record, const ModelParams& params, const ModelConfig& model_cfg,
                               const SamplerConfig& sampler_cfg, const VoteConfig& vote_cfg, const Vocabulary& vocab);

} // namespace sgmt
