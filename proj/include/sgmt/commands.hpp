#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "sgmt/config.hpp"
#include "sgmt/metrics.hpp"

namespace sgmt {

/// 0 success, 2 config error, 3 data error, 4 numeric failure, 1 anything else.
int exit_code_for(const std::exception& e);

enum class Split { train, test };

struct SynthSummary {
    std::size_t records = 0;
    int vocab_size = 0;
};

/// The test split draws from the "test" sub-stream of the data seed.
SynthSummary cmd_synth_data(const RunConfig& cfg, const std::filesystem::path& out_dir, bool force,
                            Split split = Split::train);

struct TrainOptions {
    std::string profile;              // empty keeps the config's train section
    int m_limit = 0;                  // overrides sampler.M when positive
    std::filesystem::path resume;     // checkpoint directory to continue from
    std::filesystem::path out;        // defaults to paths.checkpoint
    std::ostream* log = nullptr;
};

struct TrainSummary {
    std::filesystem::path checkpoint;
    long steps = 0;
    double final_loss = 0.0;
};

TrainSummary cmd_train(RunConfig cfg, const TrainOptions& options = {});

struct CaptionLine {
    std::string id;
    std::string caption;
    int subtype_pred = 0;
    std::vector<std::string> votes;
};

std::string to_json_line(const CaptionLine& line);
std::vector<CaptionLine> read_caption_lines(const std::filesystem::path& path);

struct CaptionOptions {
    int vote = 0;            // 0 uses vote.k from the config
    int infer_limit = 64;
    double patch_noise = -1.0;  // negative uses vote.patch_noise from the config
};

/// Captions every slide of a dataset. Slide i uses a generator seeded from
/// the vote seed and the slide id, so output does not depend on file order.
std::vector<CaptionLine> caption_records(const std::vector<WSIRecord>& records, const ModelParams& params,
                                         const ModelConfig& model_cfg, const Vocabulary& vocab,
                                         SamplerConfig sampler_cfg, VoteConfig vote_cfg);

std::vector<CaptionLine> cmd_caption(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                                     const std::filesystem::path& dataset, const CaptionOptions& options = {});

struct EvalSummary {
    MetricReport metrics;
    double subtype_accuracy = 0.0;
    std::vector<double> per_subtype_accuracy;
    std::vector<int> per_subtype_count;
    double exact_match = 0.0;
    std::size_t items = 0;
};

/// Joins candidates to records by id; both sides must cover the same ids.
EvalSummary evaluate_captions(const std::vector<CaptionLine>& candidates, const std::vector<WSIRecord>& records,
                              int K, const MetricOptions& options = {});
std::string format_eval(const EvalSummary& summary);

/// K <= 0 takes the class count from the dataset.
EvalSummary cmd_eval(const std::filesystem::path& candidates, const std::filesystem::path& dataset, int K,
                     const MetricOptions& options = {});

MetricReport cmd_metrics(const std::filesystem::path& candidates, const std::filesystem::path& references,
                         const MetricOptions& options = {});

struct SweepRow {
    int train_limit = 0;
    int infer_limit = 0;
    MetricReport metrics;
};

struct SweepOptions {
    int vote = 1;
    std::ostream* log = nullptr;
};

/// One model per train limit on paths.dataset, each evaluated on
/// paths.test_dataset at every infer limit.
std::vector<SweepRow> cmd_sweep(const RunConfig& cfg, const std::vector<int>& train_limits,
                                const std::vector<int>& infer_limits, const SweepOptions& options = {});

/// Header `train_limit,infer_limit,bleu4,cider,rougeL,meteor`.
std::string format_sweep_csv(const std::vector<SweepRow>& rows);

} // namespace sgmt
