#pragma once

#include <array>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sgmt/autograd.hpp"
#include "sgmt/data.hpp"
#include "sgmt/rng.hpp"

namespace sgmt {

struct ModelConfig {
    int d = 128;
    int enc_layers = 2;
    int dec_layers = 2;
    int heads = 4;
    int ff_dim = 256;
    int vocab_size = 0;
    int K = 4;
    int max_caption_len = kDefaultMaxCaptionLen;
    double dropout_rate = 0.1;
    // Patch embedder: three stride-2 3x3 convolutions, global average, linear.
    int patch_size = 16;
    int channels = 3;
    std::array<int, 3> conv_channels{8, 16, 32};

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

/// Ordered collection of arrays addressed by stable names.
class NamedArrays {
public:
    Matrix& add(const std::string& name, Matrix value);

    Matrix& at(std::string_view name);
    const Matrix& at(std::string_view name) const;
    bool contains(std::string_view name) const { return index_.find(name) != index_.end(); }
    std::size_t index_of(std::string_view name) const;

    std::size_t count() const { return names_.size(); }
    const std::string& name(std::size_t i) const { return names_[i]; }
    Matrix& value(std::size_t i) { return values_[i]; }
    const Matrix& value(std::size_t i) const { return values_[i]; }
    const std::vector<std::string>& names() const { return names_; }

    std::size_t total_size() const;
    NamedArrays zeros_like() const;
    bool same_layout(const NamedArrays& other) const;

    bool operator==(const NamedArrays& other) const;

private:
    std::vector<std::string> names_;
    std::vector<Matrix> values_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

using ModelParams = NamedArrays;

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, unit
/// layer-norm scales. Embedding tables and the subtype token use fan_in = 1.
ModelParams init_params(const ModelConfig& cfg, Rng& rng);

/// A sampled patch set together with its supervision.
struct TrainingSample {
    std::vector<PatchImage> patches;
    Caption caption;
    int subtype = 0;
};

struct ForwardOutput {
    Matrix encoder_states;   // (m + 1) x d, row 0 is the subtype token
    Matrix subtype_logits;   // 1 x K
    Matrix caption_logits;   // T x vocab_size
};

struct LossBreakdown {
    double total = 0.0;
    double caption = 0.0;
    double subtype = 0.0;
};

struct GradientResult {
    LossBreakdown loss;
    NamedArrays grads;
};

/// Row i is the embedding of patch i.
Matrix embed_patches(std::span<const PatchImage> patches, const ModelParams& params, const ModelConfig& cfg);
/// Prepends the subtype token and runs the encoder stack.
Matrix encode(const Matrix& patch_embeds, const ModelParams& params, const ModelConfig& cfg);
/// Logits of the subtype head applied to encoder row 0.
Eigen::VectorXd predict_subtype(const Matrix& encoder_states, const ModelParams& params, const ModelConfig& cfg);
/// Next-token logits after `prefix` (which starts with BOS).
Eigen::VectorXd decode_step(std::span<const int> prefix, const Matrix& encoder_states, const ModelParams& params,
                            const ModelConfig& cfg);
/// Teacher-forced logits for every position of `inputs`.
Matrix decode_sequence(std::span<const int> inputs, const Matrix& encoder_states, const ModelParams& params,
                       const ModelConfig& cfg);

/// Passing a generator enables dropout.
ForwardOutput forward(const TrainingSample& sample, const ModelParams& params, const ModelConfig& cfg,
                      Rng* dropout_rng = nullptr);

/// L = L_caption + beta * L_subtype evaluated from forward outputs.
LossBreakdown loss(const ForwardOutput& output, const Caption& target, int subtype, double beta);

/// Exact gradients of the joint loss for one sample.
GradientResult backward(const TrainingSample& sample, const ModelParams& params, const ModelConfig& cfg, double beta,
                        Rng* dropout_rng = nullptr);

/// Sinusoidal position table, rows x d.
Matrix sinusoidal_positions(int rows, int d);

/// Fixed row-wise softmax used wherever probabilities are reported.
Matrix softmax(const Matrix& logits);

} // namespace sgmt
