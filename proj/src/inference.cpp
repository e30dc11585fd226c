#include "sgmt/inference.hpp"

#include <algorithm>
#include <limits>
#include <map>

#include "sgmt/error.hpp"

namespace sgmt {

void VoteConfig::validate() const {
    if (k < 1) throw config_error("vote: k must be at least 1");
    if (patch_noise < 0.0) throw config_error("vote: patch_noise must be non-negative");
    if (tie_break != "lexicographic") throw config_error("vote: tie_break must be 'lexicographic'");
}

Caption greedy_decode(const Matrix& encoder_states, const ModelParams& params, const ModelConfig& cfg, int max_len) {
    max_len = std::min(max_len, cfg.max_caption_len);
    Caption caption;
    caption.tokens.push_back(kBosId);
    while (caption.tokens.size() - 1 < static_cast<std::size_t>(max_len)) {
        Eigen::VectorXd logits = decode_step(caption.tokens, encoder_states, params, cfg);
        logits(kPadId) = -std::numeric_limits<double>::infinity();
        logits(kBosId) = -std::numeric_limits<double>::infinity();
        Eigen::Index best = 0;
        logits.maxCoeff(&best);
        if (best == kEosId) break;
        caption.tokens.push_back(static_cast<int>(best));
    }
    caption.tokens.push_back(kEosId);
    return caption;
}

CaptionResult caption_patches(std::span<const PatchImage> patches, const ModelParams& params,
                              const ModelConfig& model_cfg) {
    const Matrix states = encode(embed_patches(patches, params, model_cfg), params, model_cfg);
    CaptionResult result;
    result.caption = greedy_decode(states, params, model_cfg, model_cfg.max_caption_len);
    Eigen::Index best = 0;
    predict_subtype(states, params, model_cfg).maxCoeff(&best);
    result.subtype = static_cast<int>(best);
    return result;
}

namespace {

CaptionResult caption_set(const WSIRecord& record, const SampledSet& set, const ModelParams& params,
                          const ModelConfig& model_cfg, Rng& rng, double patch_noise) {
    auto patches = materialize(record, set);
    if (patch_noise > 0.0) {
        for (auto& patch : patches) patch = corrupt_patch(patch, patch_noise, rng);
    }
    return caption_patches(patches, params, model_cfg);
}

} // namespace

CaptionResult caption_once(const WSIRecord& record, const ModelParams& params, const ModelConfig& model_cfg,
                           const SamplerConfig& sampler_cfg, Rng& rng, double patch_noise) {
    const SampledSet set = sample_infer(static_cast<int>(record.patches.size()), sampler_cfg, rng);
    return caption_set(record, set, params, model_cfg, rng, patch_noise);
}

Caption vote(std::span<const Caption> captions, const Vocabulary& vocab) {
    if (captions.empty()) throw data_error("vote needs at least one caption");
    std::map<std::vector<int>, int> counts;
    for (const auto& c : captions) ++counts[c.words()];
    int best_count = 0;
    for (const auto& [words, count] : counts) best_count = std::max(best_count, count);
    const Caption* best = nullptr;
    std::string best_text;
    for (const auto& c : captions) {
        if (counts[c.words()] != best_count) continue;
        std::string text = vocab.decode_caption(c);
        if (best == nullptr || text < best_text) {
            best = &c;
            best_text = std::move(text);
        }
    }
    Caption out;
    out.tokens.push_back(kBosId);
    for (const int id : best->words()) out.tokens.push_back(id);
    out.tokens.push_back(kEosId);
    return out;
}

int vote_subtype(std::span<const int> subtypes) {
    if (subtypes.empty()) throw data_error("vote needs at least one subtype");
    std::map<int, int> counts;
    for (const int s : subtypes) ++counts[s];
    int best = counts.begin()->first;
    for (const auto& [s, count] : counts) {
        if (count > counts[best]) best = s;
    }
    return best;
}

VoteResult caption_with_voting(const WSIRecord& record, const ModelParams& params, const ModelConfig& model_cfg,
                               const SamplerConfig& sampler_cfg, const VoteConfig& vote_cfg, const Vocabulary& vocab) {
    vote_cfg.validate();
    Rng rng(vote_cfg.seed);
    const auto sets = make_vote_sets(static_cast<int>(record.patches.size()), vote_cfg.k, sampler_cfg, rng);
    VoteResult result;
    std::vector<Caption> captions;
    std::vector<int> subtypes;
    for (const auto& set : sets) {
        result.members.push_back(caption_set(record, set, params, model_cfg, rng, vote_cfg.patch_noise));
        captions.push_back(result.members.back().caption);
        subtypes.push_back(result.members.back().subtype);
    }
    result.caption = vote(captions, vocab);
    result.subtype = vote_subtype(subtypes);
    return result;
}

} // namespace sgmt
