#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sgmt/data.hpp"
#include "sgmt/model.hpp"
#include "sgmt/rng.hpp"

namespace fixtures {

/// d=8, one encoder and one decoder layer, two heads, vocab 11, K=3.
inline sgmt::ModelConfig micro_config() {
    sgmt::ModelConfig cfg;
    cfg.d = 8;
    cfg.enc_layers = 1;
    cfg.dec_layers = 1;
    cfg.heads = 2;
    cfg.ff_dim = 16;
    cfg.vocab_size = 11;
    cfg.K = 3;
    cfg.max_caption_len = 10;
    cfg.dropout_rate = 0.0;
    cfg.patch_size = 8;
    cfg.channels = 3;
    cfg.conv_channels = {2, 3, 4};
    return cfg;
}

inline sgmt::PatchImage random_patch(const sgmt::ModelConfig& cfg, sgmt::Rng& rng) {
    sgmt::PatchImage p(cfg.channels, cfg.patch_size);
    for (auto& v : p.pixels) v = static_cast<float>(rng.uniform());
    return p;
}

inline std::vector<sgmt::PatchImage> random_patches(int m, const sgmt::ModelConfig& cfg, sgmt::Rng& rng) {
    std::vector<sgmt::PatchImage> out;
    for (int i = 0; i < m; ++i) out.push_back(random_patch(cfg, rng));
    return out;
}

/// BOS, `words` random word ids, EOS: target length words + 1.
inline sgmt::Caption random_caption(int words, const sgmt::ModelConfig& cfg, sgmt::Rng& rng) {
    sgmt::Caption c;
    c.tokens.push_back(sgmt::kBosId);
    for (int i = 0; i < words; ++i) c.tokens.push_back(rng.between(sgmt::kFirstWordId, cfg.vocab_size - 1));
    c.tokens.push_back(sgmt::kEosId);
    return c;
}

inline sgmt::TrainingSample micro_sample(const sgmt::ModelConfig& cfg, sgmt::Rng& rng, int m = 3, int T = 4) {
    sgmt::TrainingSample s;
    s.patches = random_patches(m, cfg, rng);
    s.caption = random_caption(T - 1, cfg, rng);
    s.subtype = rng.between(0, cfg.K - 1);
    return s;
}

inline std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("sgmt_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

} // namespace fixtures
