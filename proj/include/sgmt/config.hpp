#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "sgmt/data.hpp"
#include "sgmt/inference.hpp"
#include "sgmt/model.hpp"
#include "sgmt/sampler.hpp"
#include "sgmt/training.hpp"

namespace sgmt {

struct PathsConfig {
    std::string dataset;
    std::string test_dataset;
    std::string checkpoint;
    std::string output_dir;
};

/// Everything a CLI command needs. Sub-component seeds derive from `seed`
/// through named streams ("data", "train", "vote") unless set explicitly.
struct RunConfig {
    std::uint64_t seed = 7;
    SyntheticSpec data;
    ModelConfig model;
    TrainConfig train;
    SamplerConfig sampler;
    VoteConfig vote;
    PathsConfig paths;

    RunConfig();
    void validate() const;
};

/// Parses a JSON document; any key outside the schema is a config error naming its path.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Sets the top-level seed and re-derives the data, train and vote seeds from it.
void override_seed(RunConfig& cfg, std::uint64_t seed);

/// Overwrites the train section with a named profile ("desk" or "paper"), keeping the seed.
void apply_profile(RunConfig& cfg, const std::string& profile);

} // namespace sgmt
