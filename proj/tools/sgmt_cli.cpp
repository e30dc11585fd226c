#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"

#include "sgmt/commands.hpp"
#include "sgmt/error.hpp"

namespace {

namespace fs = std::filesystem;

sgmt::RunConfig load_optional(const std::string& path, std::optional<std::uint64_t> seed) {
    sgmt::RunConfig cfg = path.empty() ? sgmt::RunConfig{} : sgmt::load_run_config(path);
    if (seed) sgmt::override_seed(cfg, *seed);
    return cfg;
}

void write_text(const std::string& out, const std::string& text) {
    if (out.empty() || out == "-") {
        std::cout << text;
        return;
    }
    std::ofstream file(out);
    if (!file) throw sgmt::data_error("cannot write " + out);
    file << text;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Subtype-guided masked transformer for slide captioning"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;

    auto* synth = app.add_subcommand("synth-data", "Generate a synthetic slide dataset");
    std::string split = "train";
    bool force = false;
    synth->add_option("--config", config_path, "Run config (JSON)");
    synth->add_option("--seed", seed, "Override the top-level seed");
    synth->add_option("--out", out, "Output directory (default paths.dataset or paths.test_dataset)");
    synth->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}));
    synth->add_flag("--force", force, "Replace a non-empty output directory");

    auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
    sgmt::TrainOptions train_opts;
    std::string resume;
    train->add_option("--config", config_path, "Run config (JSON)")->required();
    train->add_option("--seed", seed, "Override the top-level seed");
    train->add_option("--profile", train_opts.profile, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
    train->add_option("--m-limit", train_opts.m_limit, "Training patch cap M")->check(CLI::PositiveNumber);
    train->add_option("--resume", resume, "Checkpoint directory to continue from");
    train->add_option("--out", out, "Checkpoint directory (default paths.checkpoint)");

    auto* caption = app.add_subcommand("caption", "Caption a dataset with a trained checkpoint");
    sgmt::CaptionOptions caption_opts;
    std::string checkpoint;
    std::string dataset;
    caption->add_option("--config", config_path, "Run config (JSON)");
    caption->add_option("--seed", seed, "Override the top-level seed");
    caption->add_option("--checkpoint", checkpoint, "Checkpoint directory (default paths.checkpoint)");
    caption->add_option("--dataset", dataset, "Dataset directory (default paths.test_dataset)");
    caption->add_option("--vote", caption_opts.vote, "Number of voting draws (default vote.k)")
        ->check(CLI::PositiveNumber);
    caption->add_option("--infer-limit", caption_opts.infer_limit, "Inference patch cap")
        ->check(CLI::PositiveNumber);
    caption->add_option("--noise", caption_opts.patch_noise, "Per-pixel noise std during inference")
        ->check(CLI::NonNegativeNumber);
    caption->add_option("--out", out, "JSON-lines output file (default stdout)");

    auto* eval = app.add_subcommand("eval", "Score captions against a dataset");
    std::string candidates;
    eval->add_option("--config", config_path, "Run config (JSON); supplies K");
    eval->add_option("--candidates", candidates, "Caption JSON-lines file")->required();
    eval->add_option("--dataset", dataset, "Dataset directory (default paths.test_dataset)");
    eval->add_option("--out", out, "Report file (default stdout)");

    auto* metrics = app.add_subcommand("metrics", "Score candidate captions against references");
    std::string references;
    sgmt::MetricOptions metric_opts;
    metrics->add_option("--candidates", candidates, "Candidate JSON-lines file")->required();
    metrics->add_option("--references", references, "Reference JSON-lines file")->required();
    metrics->add_flag("--smooth", metric_opts.bleu_smoothing, "Add-one smoothing for BLEU");
    metrics->add_option("--out", out, "Report file (default stdout)");

    auto* sweep = app.add_subcommand("sweep", "Grid over training and inference patch caps");
    std::vector<int> train_limits;
    std::vector<int> infer_limits;
    sgmt::SweepOptions sweep_opts;
    sweep->add_option("--config", config_path, "Run config (JSON)")->required();
    sweep->add_option("--seed", seed, "Override the top-level seed");
    sweep->add_option("--train-limits", train_limits, "Comma-separated training caps")->delimiter(',')->required();
    sweep->add_option("--infer-limits", infer_limits, "Comma-separated inference caps")->delimiter(',')->required();
    sweep->add_option("--vote", sweep_opts.vote, "Voting draws per slide")->check(CLI::PositiveNumber);
    sweep->add_option("--out", out, "CSV output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) {
            const sgmt::RunConfig cfg = load_optional(config_path, seed);
            const sgmt::Split which = split == "test" ? sgmt::Split::test : sgmt::Split::train;
            const std::string dir =
                !out.empty() ? out : (which == sgmt::Split::test ? cfg.paths.test_dataset : cfg.paths.dataset);
            if (dir.empty()) throw sgmt::config_error("no output directory: pass --out or set paths");
            const auto summary = sgmt::cmd_synth_data(cfg, dir, force, which);
            std::cout << "records " << summary.records << "\nvocab_size " << summary.vocab_size << "\n";
        } else if (train->parsed()) {
            const sgmt::RunConfig cfg = load_optional(config_path, seed);
            train_opts.resume = resume;
            train_opts.out = out;
            train_opts.log = &std::cerr;
            const auto summary = sgmt::cmd_train(cfg, train_opts);
            std::cout << "checkpoint " << summary.checkpoint.string() << "\nsteps " << summary.steps << "\n";
        } else if (caption->parsed()) {
            const sgmt::RunConfig cfg = load_optional(config_path, seed);
            const std::string ck = checkpoint.empty() ? cfg.paths.checkpoint : checkpoint;
            const std::string ds = dataset.empty() ? cfg.paths.test_dataset : dataset;
            if (ck.empty() || ds.empty()) throw sgmt::config_error("caption needs --checkpoint and --dataset");
            std::string text;
            for (const auto& line : sgmt::cmd_caption(cfg, ck, ds, caption_opts)) text += sgmt::to_json_line(line) + "\n";
            write_text(out, text);
        } else if (eval->parsed()) {
            const sgmt::RunConfig cfg = load_optional(config_path, std::nullopt);
            const std::string ds = dataset.empty() ? cfg.paths.test_dataset : dataset;
            if (ds.empty()) throw sgmt::config_error("eval needs --dataset");
            const int K = config_path.empty() ? 0 : cfg.model.K;
            write_text(out, sgmt::format_eval(sgmt::cmd_eval(candidates, ds, K)) + "\n");
        } else if (metrics->parsed()) {
            write_text(out, sgmt::format_report(sgmt::cmd_metrics(candidates, references, metric_opts)) + "\n");
        } else if (sweep->parsed()) {
            const sgmt::RunConfig cfg = load_optional(config_path, seed);
            sweep_opts.log = &std::cerr;
            write_text(out, sgmt::format_sweep_csv(sgmt::cmd_sweep(cfg, train_limits, infer_limits, sweep_opts)));
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return sgmt::exit_code_for(e);
    }
    return 0;
}
