#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "fixtures.hpp"
#include "sgmt/commands.hpp"
#include "sgmt/error.hpp"

using namespace sgmt;
namespace fs = std::filesystem;

namespace {

std::string tiny_config_json(const fs::path& dir) {
    return R"({
  "seed": 11,
  "data": {"K": 2, "num_slides": 6, "patches_min": 4, "patches_max": 8, "patch_size": 8},
  "model": {"d": 8, "enc_layers": 1, "dec_layers": 1, "heads": 2, "ff_dim": 16, "conv_channels": [2, 3, 4]},
  "train": {"epochs": 1, "batch_size": 2, "learning_rate": 0.001},
  "sampler": {"M": 4},
  "vote": {"k": 2},
  "paths": {"dataset": ")" + (dir / "train").string() + R"(", "test_dataset": ")" + (dir / "test").string() +
           R"(", "checkpoint": ")" + (dir / "ckpt").string() + R"("}
})";
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(SGMT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

} // namespace

TEST_CASE("config parsing") {
    const RunConfig cfg = parse_run_config(R"({"seed": 3, "data": {"K": 3}, "vote": {"k": 7}})");
    CHECK(cfg.seed == 3);
    CHECK(cfg.data.K == 3);
    CHECK(cfg.model.K == 3);
    CHECK(cfg.vote.k == 7);
    CHECK(cfg.data.seed == derive_seed(3, "data"));

    CHECK_THROWS_WITH(parse_run_config(R"({"model": {"foo": 1}})"), doctest::Contains("model.foo"));
    CHECK_THROWS_WITH(parse_run_config(R"({"bar": 1})"), doctest::Contains("bar"));
    CHECK_THROWS_AS(parse_run_config("{not json"), Error);
    CHECK_THROWS_AS(parse_run_config(R"({"sampler": {"alpha": 1.0}})"), Error);
    try {
        parse_run_config(R"({"train": {"profile": "laptop"}})");
        FAIL("expected a config error");
    } catch (const Error& e) {
        CHECK(exit_code_for(e) == 2);
    }

    RunConfig o = cfg;
    override_seed(o, 99);
    CHECK(o.vote.seed == derive_seed(99, "vote"));
    CHECK(o.train.seed == 99);
}

TEST_CASE("exit codes") {
    CHECK(exit_code_for(config_error("x")) == 2);
    CHECK(exit_code_for(data_error("x")) == 3);
    CHECK(exit_code_for(numeric_error("x")) == 4);
    CHECK(exit_code_for(std::runtime_error("x")) == 1);

    const fs::path dir = fixtures::scratch("cli_exit");
    fs::create_directories(dir);
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("") != 0);
    CHECK(run_cli("train --config " + (dir / "missing.json").string()) == 2);
    {
        std::ofstream(dir / "bad.json") << R"({"model": {"foo": 1}})";
    }
    CHECK(run_cli("train --config " + (dir / "bad.json").string()) == 2);
    CHECK(run_cli("eval --candidates " + (dir / "none.jsonl").string() + " --dataset " + (dir / "nowhere").string()) ==
          3);
}

TEST_CASE("synth-data writes deterministic datasets") {
    const fs::path dir = fixtures::scratch("cli_synth");
    const RunConfig cfg = parse_run_config(tiny_config_json(dir));
    const SynthSummary s = cmd_synth_data(cfg, dir / "a", false);
    CHECK(s.records == 6);
    CHECK(s.vocab_size > 4);
    cmd_synth_data(cfg, dir / "b", false);
    CHECK(slurp(dir / "a" / "manifest.json") == slurp(dir / "b" / "manifest.json"));

    CHECK_THROWS_AS(cmd_synth_data(cfg, dir / "a", false), Error);
    CHECK_NOTHROW(cmd_synth_data(cfg, dir / "a", true));

    cmd_synth_data(cfg, dir / "t", false, Split::test);
    const auto train = load_dataset(dir / "a");
    const auto test = load_dataset(dir / "t");
    REQUIRE(test.size() == train.size());
    CHECK(test.front().id.rfind("test", 0) == 0);
    CHECK_FALSE(test.front().patches == train.front().patches);
}

TEST_CASE("eval of references against themselves") {
    const fs::path dir = fixtures::scratch("cli_eval");
    const RunConfig cfg = parse_run_config(tiny_config_json(dir));
    cmd_synth_data(cfg, dir / "test", false);
    const auto records = load_dataset(dir / "test");
    std::vector<CaptionLine> lines;
    for (const auto& r : records) lines.push_back({r.id, r.caption, r.subtype, {}});
    std::reverse(lines.begin(), lines.end());
    {
        std::ofstream out(dir / "cands.jsonl");
        for (const auto& l : lines) out << to_json_line(l) << '\n';
    }
    const EvalSummary e = cmd_eval(dir / "cands.jsonl", dir / "test", 0);
    CHECK(e.metrics.bleu4 == doctest::Approx(1.0));
    CHECK(e.metrics.rougeL == doctest::Approx(1.0));
    CHECK(e.subtype_accuracy == 1.0);
    CHECK(e.exact_match == 1.0);
    CHECK(e.items == records.size());
    CHECK(format_eval(e).find("\"subtype_accuracy\": 1.0000") != std::string::npos);

    lines.pop_back();
    CHECK_THROWS_AS(evaluate_captions(lines, records, 2), Error);
    lines.push_back(lines.front());
    CHECK_THROWS_AS(evaluate_captions(lines, records, 2), Error);
}

TEST_CASE("caption lines round trip") {
    const fs::path dir = fixtures::scratch("cli_lines");
    fs::create_directories(dir);
    const CaptionLine a{"slide_1", "evenly tinted \"sheets\"", 2, {"x", "y"}};
    {
        std::ofstream(dir / "c.jsonl") << to_json_line(a) << '\n';
    }
    const auto back = read_caption_lines(dir / "c.jsonl");
    REQUIRE(back.size() == 1);
    CHECK(back[0].id == a.id);
    CHECK(back[0].caption == a.caption);
    CHECK(back[0].subtype_pred == 2);
    CHECK(back[0].votes == a.votes);
}

TEST_CASE("small pipeline end to end") {
    const fs::path dir = fixtures::scratch("cli_pipeline");
    fs::create_directories(dir);
    {
        std::ofstream(dir / "config.json") << tiny_config_json(dir);
    }
    const std::string config = " --config " + (dir / "config.json").string();
    CHECK(run_cli("synth-data" + config) == 0);
    CHECK(run_cli("synth-data --split test" + config) == 0);
    CHECK(run_cli("synth-data" + config) == 3);
    CHECK(run_cli("train" + config) == 0);
    CHECK(fs::exists(dir / "ckpt" / "manifest.json"));
    CHECK(run_cli("caption --out " + (dir / "caps.jsonl").string() + config) == 0);
    CHECK(read_caption_lines(dir / "caps.jsonl").size() == 6);
    CHECK(run_cli("caption --out " + (dir / "caps2.jsonl").string() + config) == 0);
    CHECK(slurp(dir / "caps.jsonl") == slurp(dir / "caps2.jsonl"));
    CHECK(run_cli("eval --candidates " + (dir / "caps.jsonl").string() + " --out " + (dir / "eval.json").string() +
                  config) == 0);
    CHECK(slurp(dir / "eval.json").find("\"bleu4\"") != std::string::npos);
    CHECK(run_cli("train --resume " + (dir / "ckpt").string() + " --out " + (dir / "ckpt2").string() + config) == 0);

    const RunConfig cfg = load_run_config(dir / "config.json");
    const auto rows = cmd_sweep(cfg, {1}, {1});
    REQUIRE(rows.size() == 1);
    const std::string csv = format_sweep_csv(rows);
    CHECK(csv.rfind("train_limit,infer_limit,bleu4,cider,rougeL,meteor\n1,1,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
}
