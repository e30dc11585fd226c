#include "sgmt/config.hpp"

#include <fstream>
#include <sstream>

#include "json_io.hpp"

namespace sgmt {

namespace json_io {

Json to_json(const ModelConfig& cfg) {
    Json j;
    j["d"] = cfg.d;
    j["enc_layers"] = cfg.enc_layers;
    j["dec_layers"] = cfg.dec_layers;
    j["heads"] = cfg.heads;
    j["ff_dim"] = cfg.ff_dim;
    j["vocab_size"] = cfg.vocab_size;
    j["K"] = cfg.K;
    j["max_caption_len"] = cfg.max_caption_len;
    j["dropout_rate"] = cfg.dropout_rate;
    j["patch_size"] = cfg.patch_size;
    j["channels"] = cfg.channels;
    j["conv_channels"] = cfg.conv_channels;
    return j;
}

Json to_json(const TrainConfig& cfg) {
    Json j;
    j["learning_rate"] = cfg.learning_rate;
    j["weight_decay"] = cfg.weight_decay;
    j["beta"] = cfg.beta;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["seed"] = cfg.seed;
    j["grad_clip_norm"] = cfg.grad_clip_norm;
    j["eval_every"] = cfg.eval_every;
    j["adam_beta1"] = cfg.adam_beta1;
    j["adam_beta2"] = cfg.adam_beta2;
    j["adam_eps"] = cfg.adam_eps;
    return j;
}

Json to_json(const SamplerConfig& cfg) {
    Json j;
    j["M"] = cfg.M;
    j["alpha"] = cfg.alpha;
    j["augment_flips"] = cfg.augment_flips;
    j["augment_rot90"] = cfg.augment_rot90;
    j["infer_limit"] = cfg.infer_limit;
    return j;
}

Json to_json(const VoteConfig& cfg) {
    Json j;
    j["k"] = cfg.k;
    j["tie_break"] = cfg.tie_break;
    j["seed"] = cfg.seed;
    j["patch_noise"] = cfg.patch_noise;
    return j;
}

void read(Section& s, ModelConfig& cfg) {
    s.get("d", cfg.d);
    s.get("enc_layers", cfg.enc_layers);
    s.get("dec_layers", cfg.dec_layers);
    s.get("heads", cfg.heads);
    s.get("ff_dim", cfg.ff_dim);
    s.get("vocab_size", cfg.vocab_size);
    s.get("K", cfg.K);
    s.get("max_caption_len", cfg.max_caption_len);
    s.get("dropout_rate", cfg.dropout_rate);
    s.get("patch_size", cfg.patch_size);
    s.get("channels", cfg.channels);
    s.get("conv_channels", cfg.conv_channels);
    s.finish();
}

void read(Section& s, TrainConfig& cfg) {
    std::string profile;
    if (s.get("profile", profile)) {
        const std::uint64_t seed = cfg.seed;
        if (profile == "desk") {
            cfg = desk_profile();
        } else if (profile == "paper") {
            cfg = paper_profile();
        } else {
            throw config_error("config: " + s.child("profile") + " must be 'desk' or 'paper'");
        }
        cfg.seed = seed;
    }
    s.get("learning_rate", cfg.learning_rate);
    s.get("weight_decay", cfg.weight_decay);
    s.get("beta", cfg.beta);
    s.get("epochs", cfg.epochs);
    s.get("batch_size", cfg.batch_size);
    s.get("seed", cfg.seed);
    s.get("grad_clip_norm", cfg.grad_clip_norm);
    s.get("eval_every", cfg.eval_every);
    s.get("adam_beta1", cfg.adam_beta1);
    s.get("adam_beta2", cfg.adam_beta2);
    s.get("adam_eps", cfg.adam_eps);
    s.finish();
}

void read(Section& s, SamplerConfig& cfg) {
    s.get("M", cfg.M);
    s.get("alpha", cfg.alpha);
    s.get("augment_flips", cfg.augment_flips);
    s.get("augment_rot90", cfg.augment_rot90);
    s.get("infer_limit", cfg.infer_limit);
    s.finish();
}

void read(Section& s, VoteConfig& cfg) {
    s.get("k", cfg.k);
    s.get("tie_break", cfg.tie_break);
    s.get("seed", cfg.seed);
    s.get("patch_noise", cfg.patch_noise);
    s.finish();
}

void read(Section& s, SyntheticSpec& spec) {
    int K = spec.K;
    std::uint64_t seed = spec.seed;
    s.get("K", K);
    s.get("seed", seed);
    if (K != spec.K) {
        const SyntheticSpec base = default_synthetic_spec(K, seed);
        spec.K = K;
        spec.textures = base.textures;
        spec.templates = base.templates;
    }
    spec.seed = seed;
    s.get("num_slides", spec.num_slides);
    s.get("patches_min", spec.patches_min);
    s.get("patches_max", spec.patches_max);
    s.get("patch_size", spec.patch_size);
    s.get("channels", spec.channels);
    s.get("amplitude", spec.amplitude);
    s.get("orientation_jitter", spec.orientation_jitter);
    s.get("brightness_levels", spec.brightness_levels);
    s.get("brightness_jitter", spec.brightness_jitter);
    s.get("noise_multipliers", spec.noise_multipliers);
    s.get("noise_jitter", spec.noise_jitter);
    s.get("templates", spec.templates);
    s.finish();
}

} // namespace json_io

RunConfig::RunConfig() : data(default_synthetic_spec(4, derive_seed(7, "data"))) {
    train.seed = seed;
    vote.seed = derive_seed(seed, "vote");
    model.K = data.K;
}

void RunConfig::validate() const {
    data.validate();
    train.validate();
    sampler.validate();
    vote.validate();
}

RunConfig parse_run_config(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("config: invalid JSON: ") + e.what());
    }
    RunConfig cfg;
    json_io::Section root(doc, "");
    root.get("seed", cfg.seed);
    cfg.data.seed = derive_seed(cfg.seed, "data");
    cfg.train.seed = cfg.seed;
    cfg.vote.seed = derive_seed(cfg.seed, "vote");

    if (const auto* node = root.object("data")) {
        json_io::Section s(*node, "data");
        json_io::read(s, cfg.data);
    }
    cfg.model.K = cfg.data.K;
    cfg.model.patch_size = cfg.data.patch_size;
    cfg.model.channels = cfg.data.channels;
    if (const auto* node = root.object("model")) {
        json_io::Section s(*node, "model");
        json_io::read(s, cfg.model);
    }
    if (const auto* node = root.object("train")) {
        json_io::Section s(*node, "train");
        json_io::read(s, cfg.train);
    }
    if (const auto* node = root.object("sampler")) {
        json_io::Section s(*node, "sampler");
        json_io::read(s, cfg.sampler);
    }
    if (const auto* node = root.object("vote")) {
        json_io::Section s(*node, "vote");
        json_io::read(s, cfg.vote);
    }
    if (const auto* node = root.object("paths")) {
        json_io::Section s(*node, "paths");
        s.get("dataset", cfg.paths.dataset);
        s.get("test_dataset", cfg.paths.test_dataset);
        s.get("checkpoint", cfg.paths.checkpoint);
        s.get("output_dir", cfg.paths.output_dir);
        s.finish();
    }
    root.finish();
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw config_error("config: cannot read " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_run_config(buffer.str());
}

void override_seed(RunConfig& cfg, std::uint64_t seed) {
    cfg.seed = seed;
    cfg.data.seed = derive_seed(seed, "data");
    cfg.train.seed = seed;
    cfg.vote.seed = derive_seed(seed, "vote");
}

void apply_profile(RunConfig& cfg, const std::string& profile) {
    TrainConfig base;
    if (profile == "desk") {
        base = desk_profile();
    } else if (profile == "paper") {
        base = paper_profile();
    } else {
        throw config_error("unknown profile '" + profile + "' (expected desk or paper)");
    }
    cfg.train.learning_rate = base.learning_rate;
    cfg.train.batch_size = base.batch_size;
    cfg.train.epochs = base.epochs;
}

} // namespace sgmt
