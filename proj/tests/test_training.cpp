#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "fixtures.hpp"
#include "sgmt/error.hpp"
#include "sgmt/inference.hpp"
#include "sgmt/training.hpp"

using namespace sgmt;
namespace fs = std::filesystem;

namespace {

TrainState scalar_state(double w) {
    TrainState s;
    Matrix m(1, 1);
    m(0, 0) = w;
    s.params.add("w", m);
    s.first_moment = s.params.zeros_like();
    s.second_moment = s.params.zeros_like();
    return s;
}

NamedArrays scalar_grad(double g) {
    NamedArrays n;
    Matrix m(1, 1);
    m(0, 0) = g;
    n.add("w", m);
    return n;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TinyTask {
    ModelConfig model;
    std::vector<WSIRecord> records;
    Vocabulary vocab;
};

TinyTask tiny_task(int slides, std::uint64_t seed) {
    TinyTask t;
    SyntheticSpec spec = default_synthetic_spec(3, seed);
    spec.num_slides = slides;
    spec.patches_min = 2;
    spec.patches_max = 6;
    spec.patch_size = 8;
    t.records = generate_synthetic(spec);
    std::vector<std::string> captions;
    for (const auto& r : t.records) captions.push_back(r.caption);
    t.vocab = build_vocabulary(captions);
    t.model = fixtures::micro_config();
    t.model.vocab_size = t.vocab.size();
    t.model.max_caption_len = 20;
    return t;
}

} // namespace

TEST_CASE("adam update on a single scalar") {
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.weight_decay = 0.0;
    TrainState s = scalar_state(1.0);
    optimizer_step(s, scalar_grad(1.0), cfg);
    CHECK(s.params.at("w")(0, 0) == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-15));
    CHECK(s.step == 1);

    TrainState still = scalar_state(0.7);
    optimizer_step(still, scalar_grad(0.0), cfg);
    CHECK(still.params.at("w")(0, 0) == 0.7);
}

TEST_CASE("decoupled weight decay is geometric") {
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.weight_decay = 0.01;
    TrainState s = scalar_state(2.0);
    optimizer_step(s, scalar_grad(0.0), cfg);
    CHECK(s.params.at("w")(0, 0) == 2.0 * (1.0 - 0.1 * 0.01));

    double expected = 2.0 * (1.0 - 0.1 * 0.01);
    for (int t = 0; t < 200; ++t) {
        optimizer_step(s, scalar_grad(0.0), cfg);
        expected *= 1.0 - 0.1 * 0.01;
        REQUIRE(s.params.at("w")(0, 0) == expected);
    }
    CHECK(expected == doctest::Approx(2.0 * std::pow(0.999, 201)).epsilon(1e-12));
}

TEST_CASE("optimizer rejects incomplete gradients") {
    TrainConfig cfg;
    TrainState s = scalar_state(1.0);
    NamedArrays other;
    other.add("v", Matrix::Zero(1, 1));
    CHECK_THROWS_AS(optimizer_step(s, other, cfg), Error);
}

TEST_CASE("gradient clipping bounds the global norm") {
    NamedArrays g;
    g.add("a", Matrix::Constant(1, 2, 3.0));
    g.add("b", Matrix::Constant(1, 1, 4.0));
    const double before = clip_gradients(g, 1.0);
    CHECK(before == doctest::Approx(std::sqrt(9.0 + 9.0 + 16.0)));
    const double after = std::sqrt(g.at("a").squaredNorm() + g.at("b").squaredNorm());
    CHECK(after == doctest::Approx(1.0));
    NamedArrays small;
    small.add("a", Matrix::Constant(1, 1, 0.5));
    clip_gradients(small, 1.0);
    CHECK(small.at("a")(0, 0) == 0.5);
}

TEST_CASE("profiles") {
    CHECK(paper_profile().learning_rate == 1e-5);
    CHECK(paper_profile().batch_size == 2);
    CHECK(paper_profile().epochs == 40);
    CHECK(desk_profile().learning_rate == 3e-4);
    CHECK(desk_profile().batch_size == 8);
    CHECK(desk_profile().epochs == 30);
    CHECK(desk_profile().beta == 1.0);
    CHECK(desk_profile().weight_decay == 1e-2);
}

TEST_CASE("one slide, one epoch, batch one is one step") {
    TinyTask task = tiny_task(1, 2);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 1;
    TrainState s = init_train_state(task.model, cfg);
    train(s, task.records, task.vocab, task.model, cfg, SamplerConfig{});
    CHECK(s.step == 1);
    CHECK(s.epoch == 1);
    CHECK(s.history.size() == 1);
}

TEST_CASE("training is deterministic") {
    TinyTask task = tiny_task(12, 3);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.seed = 99;
    SamplerConfig sampler;
    sampler.M = 3;
    TrainState a = init_train_state(task.model, cfg);
    TrainState b = init_train_state(task.model, cfg);
    train(a, task.records, task.vocab, task.model, cfg, sampler);
    train(b, task.records, task.vocab, task.model, cfg, sampler);
    CHECK(a.params == b.params);
    CHECK(a.second_moment == b.second_moment);
    CHECK(a.rng == b.rng);
    REQUIRE(a.history.size() == 6);
    for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].loss == b.history[i].loss);

    cfg.seed = 100;
    TrainState c = init_train_state(task.model, cfg);
    train(c, task.records, task.vocab, task.model, cfg, sampler);
    CHECK_FALSE(a.params == c.params);
}

TEST_CASE("training rejects mismatched inputs") {
    TinyTask task = tiny_task(3, 4);
    TrainConfig cfg;
    cfg.epochs = 1;
    TrainState s = init_train_state(task.model, cfg);
    CHECK_THROWS_AS(train(s, {}, task.vocab, task.model, cfg, SamplerConfig{}), Error);
    ModelConfig wrong = task.model;
    wrong.vocab_size += 1;
    CHECK_THROWS_AS(train(s, task.records, task.vocab, wrong, cfg, SamplerConfig{}), Error);
}

TEST_CASE("a single slide is memorised") {
    ModelConfig cfg = fixtures::micro_config();
    cfg.vocab_size = 10;
    Rng rng(31);
    WSIRecord record;
    record.id = "solo";
    record.patches = fixtures::random_patches(4, cfg, rng);
    record.caption = "alpha beta gamma";
    record.subtype = 1;
    Vocabulary vocab = build_vocabulary({"alpha beta gamma", "delta epsilon zeta"});
    REQUIRE(vocab.size() == 10);

    for (const double beta : {1.0, 0.0}) {
        TrainConfig train_cfg;
        train_cfg.learning_rate = 1e-2;
        train_cfg.weight_decay = 0.0;
        train_cfg.beta = beta;
        train_cfg.seed = 5;
        SamplerConfig sampler;
        sampler.augment_flips = false;
        sampler.augment_rot90 = false;
        TrainState s = init_train_state(cfg, train_cfg);
        const OverfitResult r = overfit_one(s, record, vocab, cfg, train_cfg, sampler, 500);
        INFO("beta " << beta);
        CHECK(r.memorized);
        CHECK(r.steps <= 500);
        const OverfitResult again = overfit_one(s, record, vocab, cfg, train_cfg, sampler, 500);
        CHECK(again.memorized);
        CHECK(again.steps == 0);
    }
}

TEST_CASE("training loss falls on synthetic slides") {
    SyntheticSpec spec = default_synthetic_spec(4, 8);
    spec.num_slides = 200;
    spec.patches_min = 4;
    spec.patches_max = 12;
    spec.patch_size = 8;
    const auto records = generate_synthetic(spec);
    std::vector<std::string> captions;
    for (const auto& r : records) captions.push_back(r.caption);
    const Vocabulary vocab = build_vocabulary(captions);
    ModelConfig model = fixtures::micro_config();
    model.d = 16;
    model.ff_dim = 32;
    model.K = 4;
    model.vocab_size = vocab.size();
    model.max_caption_len = 20;
    TrainConfig cfg = desk_profile();
    cfg.learning_rate = 3e-3;
    cfg.seed = 8;
    SamplerConfig sampler;
    sampler.M = 4;
    TrainState s = init_train_state(model, cfg);
    train(s, records, vocab, model, cfg, sampler);
    const double first = s.history.front().loss;
    double last = 0;
    const std::size_t per_epoch = 25;
    for (std::size_t i = s.history.size() - per_epoch; i < s.history.size(); ++i) last += s.history[i].loss;
    last /= per_epoch;
    INFO("first " << first << " last " << last);
    CHECK(last <= 0.2 * first);
}

TEST_CASE("checkpoints round trip and reject mismatches") {
    TinyTask task = tiny_task(6, 5);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 2;
    cfg.seed = 17;
    Checkpoint ck{task.model, cfg, init_train_state(task.model, cfg), task.vocab};
    train(ck.state, task.records, task.vocab, task.model, cfg, SamplerConfig{});
    const fs::path dir = fixtures::scratch("ck_roundtrip");
    save_checkpoint(ck, dir);
    const Checkpoint back = load_checkpoint(dir);
    CHECK(back.model_cfg == ck.model_cfg);
    CHECK(back.train_cfg == ck.train_cfg);
    CHECK(back.vocab == ck.vocab);
    CHECK(back.state.step == ck.state.step);
    CHECK(back.state.epoch == ck.state.epoch);
    CHECK(back.state.rng == ck.state.rng);
    CHECK(back.state.history.size() == ck.state.history.size());
    for (std::size_t i = 0; i < ck.state.params.count(); ++i) {
        const Matrix rounded = ck.state.params.value(i).cast<float>().cast<double>();
        CHECK(back.state.params.value(i) == rounded);
    }
    CHECK(read_file(dir / "loss.csv").rfind("step,loss,caption_loss,subtype_loss\n", 0) == 0);

    const fs::path again = fixtures::scratch("ck_roundtrip_again");
    save_checkpoint(ck, again);
    for (const char* f : {"manifest.json", "params.f32", "vocab.json", "loss.csv"})
        CHECK(read_file(dir / f) == read_file(again / f));

    std::string manifest = read_file(dir / "manifest.json");
    const auto pos = manifest.find("\"subtype_token\"");
    REQUIRE(pos != std::string::npos);
    const auto shape = manifest.find("\"shape\"", pos);
    const auto shape_end = manifest.find(']', shape);
    manifest.replace(shape, shape_end - shape + 1, "\"shape\": [1, 7]");
    {
        std::ofstream out(dir / "manifest.json");
        out << manifest;
    }
    CHECK_THROWS_WITH(load_checkpoint(dir), doctest::Contains("shape mismatch for subtype_token"));
    fs::remove_all(dir);
    fs::remove_all(again);
}

TEST_CASE("resume continues the step counter") {
    TinyTask task = tiny_task(4, 6);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 4;
    Checkpoint ck{task.model, cfg, init_train_state(task.model, cfg), task.vocab};
    train(ck.state, task.records, task.vocab, task.model, cfg, SamplerConfig{});
    const long s = ck.state.step;
    const fs::path dir = fixtures::scratch("ck_resume");
    save_checkpoint(ck, dir);
    Checkpoint back = load_checkpoint(dir);
    cfg.epochs = 2;
    train(back.state, task.records, task.vocab, task.model, cfg, SamplerConfig{});
    CHECK(back.state.history[static_cast<std::size_t>(s)].step == s + 1);
    CHECK(back.state.step == 2 * s);
    fs::remove_all(dir);
}
