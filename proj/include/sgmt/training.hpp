#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sgmt/data.hpp"
#include "sgmt/model.hpp"
#include "sgmt/rng.hpp"
#include "sgmt/sampler.hpp"

namespace sgmt {

struct TrainConfig {
    double learning_rate = 3e-4;
    double weight_decay = 1e-2;
    double beta = 1.0;  // weight of the subtype loss
    int epochs = 30;
    int batch_size = 8;
    std::uint64_t seed = 0;
    double grad_clip_norm = 0.0;  // 0 disables clipping
    int eval_every = 0;           // epochs between validation evaluations, 0 disables
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

/// lr 1e-5, batch 2, 40 epochs.
TrainConfig paper_profile();
/// lr 3e-4, batch 8, 30 epochs.
TrainConfig desk_profile();

struct LossRecord {
    long step = 0;
    double loss = 0.0;
    double caption_loss = 0.0;
    double subtype_loss = 0.0;
};

struct TrainState {
    ModelParams params;
    NamedArrays first_moment;
    NamedArrays second_moment;
    long step = 0;
    int epoch = 0;  // completed epochs
    Rng rng;
    std::vector<LossRecord> history;
};

/// Fresh parameters from the "init" sub-stream and a generator on the "train" sub-stream.
TrainState init_train_state(const ModelConfig& model_cfg, const TrainConfig& train_cfg);

/// AdamW with bias correction; decay multiplies weights by (1 - lr * wd) before the moment update.
void optimizer_step(TrainState& state, const NamedArrays& grads, const TrainConfig& cfg);

/// Scales grads in place so their global L2 norm is at most max_norm. Returns the pre-clip norm.
double clip_gradients(NamedArrays& grads, double max_norm);

struct TrainHooks {
    /// Called after every completed epoch.
    std::function<void(const TrainState&)> on_epoch;
};

/// Runs epochs [state.epoch, cfg.epochs). Each slide draws a fresh training
/// sample every time it is visited.
void train(TrainState& state, const std::vector<WSIRecord>& dataset, const Vocabulary& vocab,
           const ModelConfig& model_cfg, const TrainConfig& train_cfg, const SamplerConfig& sampler_cfg,
           const TrainHooks& hooks = {});

struct OverfitResult {
    int steps = 0;
    bool memorized = false;
};

/// Trains on one slide until greedy decoding reproduces its caption or `max_steps` is reached.
OverfitResult overfit_one(TrainState& state, const WSIRecord& record, const Vocabulary& vocab,
                          const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                          const SamplerConfig& sampler_cfg, int max_steps);

/// CSV with header `step,loss,caption_loss,subtype_loss`.
void write_loss_csv(const std::vector<LossRecord>& history, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Checkpoints: a directory with manifest.json, params.f32 (little-endian
// float32, parameters then Adam moments) and vocab.json.

struct Checkpoint {
    ModelConfig model_cfg;
    TrainConfig train_cfg;
    TrainState state;
    Vocabulary vocab;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

} // namespace sgmt
