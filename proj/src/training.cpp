#include "sgmt/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "sgmt/error.hpp"
#include "sgmt/inference.hpp"

namespace sgmt {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw config_error("train: learning_rate must be positive");
    if (weight_decay < 0.0) throw config_error("train: weight_decay must be non-negative");
    if (beta < 0.0) throw config_error("train: beta must be non-negative");
    if (epochs < 1) throw config_error("train: epochs must be at least 1");
    if (batch_size < 1) throw config_error("train: batch_size must be at least 1");
    if (grad_clip_norm < 0.0) throw config_error("train: grad_clip_norm must be non-negative");
    if (eval_every < 0) throw config_error("train: eval_every must be non-negative");
}

TrainConfig paper_profile() {
    TrainConfig cfg;
    cfg.learning_rate = 1e-5;
    cfg.batch_size = 2;
    cfg.epochs = 40;
    return cfg;
}

TrainConfig desk_profile() {
    TrainConfig cfg;
    cfg.learning_rate = 3e-4;
    cfg.batch_size = 8;
    cfg.epochs = 30;
    return cfg;
}

TrainState init_train_state(const ModelConfig& model_cfg, const TrainConfig& train_cfg) {
    TrainState state;
    Rng init(derive_seed(train_cfg.seed, "init"));
    state.params = init_params(model_cfg, init);
    state.first_moment = state.params.zeros_like();
    state.second_moment = state.params.zeros_like();
    state.rng = Rng(derive_seed(train_cfg.seed, "train"));
    return state;
}

void optimizer_step(TrainState& state, const NamedArrays& grads, const TrainConfig& cfg) {
    for (std::size_t i = 0; i < state.params.count(); ++i) {
        if (!grads.contains(state.params.name(i)))
            throw data_error("gradient missing for parameter " + state.params.name(i));
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(cfg.adam_beta1, t);
    const double correction2 = 1.0 - std::pow(cfg.adam_beta2, t);
    const double decay = 1.0 - cfg.learning_rate * cfg.weight_decay;
    for (std::size_t i = 0; i < state.params.count(); ++i) {
        Matrix& w = state.params.value(i);
        const Matrix& g = grads.at(state.params.name(i));
        if (g.rows() != w.rows() || g.cols() != w.cols())
            throw data_error("gradient shape mismatch for " + state.params.name(i));
        Matrix& m = state.first_moment.value(i);
        Matrix& v = state.second_moment.value(i);
        for (Eigen::Index j = 0; j < w.size(); ++j) {
            const double gj = g.data()[j];
            double& mj = m.data()[j];
            double& vj = v.data()[j];
            mj = cfg.adam_beta1 * mj + (1.0 - cfg.adam_beta1) * gj;
            vj = cfg.adam_beta2 * vj + (1.0 - cfg.adam_beta2) * gj * gj;
            const double m_hat = mj / correction1;
            const double v_hat = vj / correction2;
            double& wj = w.data()[j];
            wj *= decay;
            wj -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
        }
    }
}

double clip_gradients(NamedArrays& grads, double max_norm) {
    double sq = 0.0;
    for (std::size_t i = 0; i < grads.count(); ++i) sq += grads.value(i).squaredNorm();
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (std::size_t i = 0; i < grads.count(); ++i) grads.value(i) *= s;
    }
    return norm;
}

namespace {

struct BatchStats {
    LossRecord record;
    NamedArrays grads;
};

BatchStats batch_gradients(TrainState& state, const std::vector<const WSIRecord*>& batch,
                           const std::vector<const Caption*>& captions, const ModelConfig& model_cfg,
                           const TrainConfig& train_cfg, const SamplerConfig& sampler_cfg) {
    BatchStats stats;
    stats.grads = state.params.zeros_like();
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const WSIRecord& record = *batch[b];
        const SampledSet set = sample_train(static_cast<int>(record.patches.size()), sampler_cfg, state.rng);
        TrainingSample sample{materialize(record, set), *captions[b], record.subtype};
        GradientResult r = backward(sample, state.params, model_cfg, train_cfg.beta, &state.rng);
        for (std::size_t i = 0; i < stats.grads.count(); ++i) stats.grads.value(i) += r.grads.value(i);
        stats.record.loss += r.loss.total;
        stats.record.caption_loss += r.loss.caption;
        stats.record.subtype_loss += r.loss.subtype;
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (std::size_t i = 0; i < stats.grads.count(); ++i) stats.grads.value(i) *= inv;
    stats.record.loss *= inv;
    stats.record.caption_loss *= inv;
    stats.record.subtype_loss *= inv;
    return stats;
}

void apply_step(TrainState& state, BatchStats& stats, const TrainConfig& train_cfg) {
    if (!std::isfinite(stats.record.loss))
        throw numeric_error("training diverged at step " + std::to_string(state.step + 1));
    if (train_cfg.grad_clip_norm > 0.0) clip_gradients(stats.grads, train_cfg.grad_clip_norm);
    optimizer_step(state, stats.grads, train_cfg);
    stats.record.step = state.step;
    state.history.push_back(stats.record);
}

} // namespace

void train(TrainState& state, const std::vector<WSIRecord>& dataset, const Vocabulary& vocab,
           const ModelConfig& model_cfg, const TrainConfig& train_cfg, const SamplerConfig& sampler_cfg,
           const TrainHooks& hooks) {
    if (dataset.empty()) throw data_error("training dataset is empty");
    model_cfg.validate();
    train_cfg.validate();
    sampler_cfg.validate();
    if (vocab.size() != model_cfg.vocab_size) throw data_error("vocabulary size does not match the model");

    std::vector<Caption> captions;
    captions.reserve(dataset.size());
    for (const auto& record : dataset) {
        if (record.subtype < 0 || record.subtype >= model_cfg.K)
            throw data_error("record " + record.id + " has a subtype outside [0, K)");
        captions.push_back(vocab.encode_caption(record.caption, model_cfg.max_caption_len));
    }

    const std::size_t batch_size = static_cast<std::size_t>(train_cfg.batch_size);
    for (int epoch = state.epoch; epoch < train_cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(dataset.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[state.rng.below(i)]);

        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            std::vector<const WSIRecord*> batch;
            std::vector<const Caption*> batch_captions;
            for (std::size_t j = start; j < std::min(order.size(), start + batch_size); ++j) {
                batch.push_back(&dataset[order[j]]);
                batch_captions.push_back(&captions[order[j]]);
            }
            BatchStats stats = batch_gradients(state, batch, batch_captions, model_cfg, train_cfg, sampler_cfg);
            apply_step(state, stats, train_cfg);
        }
        state.epoch = epoch + 1;
        if (hooks.on_epoch) hooks.on_epoch(state);
    }
}

OverfitResult overfit_one(TrainState& state, const WSIRecord& record, const Vocabulary& vocab,
                          const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                          const SamplerConfig& sampler_cfg, int max_steps) {
    const Caption target = vocab.encode_caption(record.caption, model_cfg.max_caption_len);
    const std::vector<const WSIRecord*> batch{&record};
    const std::vector<const Caption*> captions{&target};
    // Memorization is judged on the first min(infer cap, n) patches in storage order.
    const int shown = std::min(sampler_cfg.infer_cap(), static_cast<int>(record.patches.size()));
    const std::vector<PatchImage> probe(record.patches.begin(), record.patches.begin() + shown);
    OverfitResult result;
    for (;;) {
        if (caption_patches(probe, state.params, model_cfg).caption == target) {
            result.memorized = true;
            return result;
        }
        if (result.steps >= max_steps) return result;
        BatchStats stats = batch_gradients(state, batch, captions, model_cfg, train_cfg, sampler_cfg);
        apply_step(state, stats, train_cfg);
        ++result.steps;
    }
}

void write_loss_csv(const std::vector<LossRecord>& history, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write " + path.string());
    out << "step,loss,caption_loss,subtype_loss\n";
    char line[160];
    for (const auto& r : history) {
        std::snprintf(line, sizeof(line), "%ld,%.9g,%.9g,%.9g\n", r.step, r.loss, r.caption_loss, r.subtype_loss);
        out << line;
    }
}

} // namespace sgmt
