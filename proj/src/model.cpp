#include "sgmt/model.hpp"

#include <cmath>

#include "sgmt/error.hpp"

namespace sgmt {

using ag::Tape;
using ag::Var;

void ModelConfig::validate() const {
    if (d < 1 || heads < 1 || d % heads != 0) throw config_error("model: d must be divisible by heads");
    if (enc_layers < 1 || dec_layers < 1) throw config_error("model: layer counts must be at least 1");
    if (ff_dim < 1) throw config_error("model: ff_dim must be positive");
    if (vocab_size < 5) throw config_error("model: vocab_size must be at least 5");
    if (K < 2) throw config_error("model: K must be at least 2");
    if (max_caption_len < 1) throw config_error("model: max_caption_len must be positive");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw config_error("model: dropout_rate must be in [0, 1)");
    if (patch_size < 4) throw config_error("model: patch_size must be at least 4");
    if (channels < 1) throw config_error("model: channels must be positive");
    for (const int c : conv_channels) {
        if (c < 1) throw config_error("model: conv_channels must be positive");
    }
}

// ---------------------------------------------------------------------------
// NamedArrays

Matrix& NamedArrays::add(const std::string& name, Matrix value) {
    if (contains(name)) throw config_error("duplicate parameter name " + name);
    index_.emplace(name, names_.size());
    names_.push_back(name);
    values_.push_back(std::move(value));
    return values_.back();
}

Matrix& NamedArrays::at(std::string_view name) {
    const auto it = index_.find(name);
    if (it == index_.end()) throw data_error("unknown parameter " + std::string(name));
    return values_[it->second];
}

const Matrix& NamedArrays::at(std::string_view name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw data_error("unknown parameter " + std::string(name));
    return values_[it->second];
}

std::size_t NamedArrays::index_of(std::string_view name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw data_error("unknown parameter " + std::string(name));
    return it->second;
}

std::size_t NamedArrays::total_size() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
    return n;
}

NamedArrays NamedArrays::zeros_like() const {
    NamedArrays out;
    for (std::size_t i = 0; i < count(); ++i) out.add(names_[i], Matrix::Zero(values_[i].rows(), values_[i].cols()));
    return out;
}

bool NamedArrays::same_layout(const NamedArrays& other) const {
    if (names_ != other.names_) return false;
    for (std::size_t i = 0; i < count(); ++i) {
        if (values_[i].rows() != other.values_[i].rows() || values_[i].cols() != other.values_[i].cols()) return false;
    }
    return true;
}

bool NamedArrays::operator==(const NamedArrays& other) const {
    if (!same_layout(other)) return false;
    for (std::size_t i = 0; i < count(); ++i) {
        if (values_[i] != other.values_[i]) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

Matrix uniform(int rows, int cols, double bound, Rng& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
    return m;
}

void add_linear(ModelParams& p, const std::string& prefix, int in, int out, Rng& rng) {
    p.add(prefix + ".weight", uniform(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng));
    p.add(prefix + ".bias", Matrix::Zero(1, out));
}

void add_layer_norm(ModelParams& p, const std::string& prefix, int d) {
    p.add(prefix + ".gamma", Matrix::Ones(1, d));
    p.add(prefix + ".beta", Matrix::Zero(1, d));
}

void add_attention(ModelParams& p, const std::string& prefix, int d, Rng& rng) {
    for (const char* proj : {"q", "k", "v", "o"}) add_linear(p, prefix + "." + proj, d, d, rng);
}

void add_feed_forward(ModelParams& p, const std::string& prefix, int d, int ff, Rng& rng) {
    add_linear(p, prefix + ".fc1", d, ff, rng);
    add_linear(p, prefix + ".fc2", ff, d, rng);
}

constexpr int kKernel = 3;
constexpr int kStride = 2;
constexpr int kPad = 1;

int conv_out(int size) { return (size + 2 * kPad - kKernel) / kStride + 1; }

} // namespace

ModelParams init_params(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    ModelParams p;
    int in_ch = cfg.channels;
    for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
        add_linear(p, "embed.conv" + std::to_string(i), kKernel * kKernel * in_ch, cfg.conv_channels[i], rng);
        in_ch = cfg.conv_channels[i];
    }
    add_linear(p, "embed.proj", in_ch, cfg.d, rng);
    p.add("subtype_token", uniform(1, cfg.d, 1.0, rng));
    for (int l = 0; l < cfg.enc_layers; ++l) {
        const std::string prefix = "encoder." + std::to_string(l);
        add_layer_norm(p, prefix + ".ln1", cfg.d);
        add_attention(p, prefix + ".attn", cfg.d, rng);
        add_layer_norm(p, prefix + ".ln2", cfg.d);
        add_feed_forward(p, prefix + ".ff", cfg.d, cfg.ff_dim, rng);
    }
    add_layer_norm(p, "encoder.final_ln", cfg.d);
    add_linear(p, "subtype_head", cfg.d, cfg.K, rng);
    p.add("token_embedding", uniform(cfg.vocab_size, cfg.d, 1.0, rng));
    for (int l = 0; l < cfg.dec_layers; ++l) {
        const std::string prefix = "decoder." + std::to_string(l);
        add_layer_norm(p, prefix + ".ln1", cfg.d);
        add_attention(p, prefix + ".self_attn", cfg.d, rng);
        add_layer_norm(p, prefix + ".ln2", cfg.d);
        add_attention(p, prefix + ".cross_attn", cfg.d, rng);
        add_layer_norm(p, prefix + ".ln3", cfg.d);
        add_feed_forward(p, prefix + ".ff", cfg.d, cfg.ff_dim, rng);
    }
    add_layer_norm(p, "decoder.final_ln", cfg.d);
    add_linear(p, "output", cfg.d, cfg.vocab_size, rng);
    return p;
}

Matrix sinusoidal_positions(int rows, int d) {
    Matrix table(rows, d);
    for (int pos = 0; pos < rows; ++pos) {
        for (int i = 0; i < d; ++i) {
            const double rate = std::pow(10000.0, -static_cast<double>(i - i % 2) / d);
            table(pos, i) = (i % 2 == 0) ? std::sin(pos * rate) : std::cos(pos * rate);
        }
    }
    return table;
}

Matrix softmax(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        out.row(r) = (logits.row(r).array() - logits.row(r).maxCoeff()).exp();
        out.row(r) /= out.row(r).sum();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Graph construction

namespace {

class Network {
public:
    Network(Tape& tape, const ModelParams& params, const ModelConfig& cfg, Rng* dropout_rng)
        : tape_(tape), params_(params), cfg_(cfg), dropout_rng_(dropout_rng) {
        vars_.reserve(params.count());
        for (std::size_t i = 0; i < params.count(); ++i) vars_.push_back(tape.parameter(params.value(i)));
    }

    const std::vector<Var>& parameter_vars() const { return vars_; }

    Var embed(std::span<const PatchImage> patches) {
        if (patches.empty()) throw data_error("no patches to embed");
        const int w = patches.front().size;
        const int ch = patches.front().channels;
        if (w != cfg_.patch_size || ch != cfg_.channels)
            throw data_error("patch shape does not match the model configuration");
        const int count = static_cast<int>(patches.size());
        Matrix pixels(static_cast<Eigen::Index>(count) * w * w, ch);
        for (int n = 0; n < count; ++n) {
            const auto& patch = patches[static_cast<std::size_t>(n)];
            if (patch.size != w || patch.channels != ch || patch.pixels.size() != static_cast<std::size_t>(ch) * w * w)
                throw data_error("patch shape mismatch within a sample");
            for (int c = 0; c < ch; ++c)
                for (int y = 0; y < w; ++y)
                    for (int x = 0; x < w; ++x) pixels((n * w + y) * w + x, c) = patch.at(c, y, x);
        }
        Var h = tape_.constant(std::move(pixels));
        int size = w;
        for (std::size_t i = 0; i < cfg_.conv_channels.size(); ++i) {
            const std::string prefix = "embed.conv" + std::to_string(i);
            Var cols = tape_.im2col(h, count, size, size, kKernel, kStride, kPad);
            h = tape_.gelu(linear(cols, prefix));
            size = conv_out(size);
        }
        Var pooled = tape_.segment_mean(h, count);
        return linear(pooled, "embed.proj");
    }

    Var encode(Var patch_embeds) {
        Var x = tape_.concat_rows(p("subtype_token"), patch_embeds);
        for (int l = 0; l < cfg_.enc_layers; ++l) {
            const std::string prefix = "encoder." + std::to_string(l);
            Var h = norm(x, prefix + ".ln1");
            x = tape_.add(x, drop(attention(h, h, prefix + ".attn", false)));
            h = norm(x, prefix + ".ln2");
            x = tape_.add(x, drop(feed_forward(h, prefix + ".ff")));
        }
        return norm(x, "encoder.final_ln");
    }

    Var subtype_logits(Var states) { return linear(tape_.slice_rows(states, 0, 1), "subtype_head"); }

    Var decode(std::span<const int> inputs, Var states) {
        const int len = static_cast<int>(inputs.size());
        if (len < 1) throw data_error("decoder input is empty");
        if (len > cfg_.max_caption_len + 1) throw data_error("decoder prefix exceeds max_caption_len");
        Var x = tape_.gather_rows(p("token_embedding"), inputs);
        x = tape_.add(x, tape_.constant(sinusoidal_positions(len, cfg_.d)));
        for (int l = 0; l < cfg_.dec_layers; ++l) {
            const std::string prefix = "decoder." + std::to_string(l);
            Var h = norm(x, prefix + ".ln1");
            x = tape_.add(x, drop(attention(h, h, prefix + ".self_attn", true)));
            h = norm(x, prefix + ".ln2");
            x = tape_.add(x, drop(attention(h, states, prefix + ".cross_attn", false)));
            h = norm(x, prefix + ".ln3");
            x = tape_.add(x, drop(feed_forward(h, prefix + ".ff")));
        }
        return linear(norm(x, "decoder.final_ln"), "output");
    }

private:
    Var p(const std::string& name) { return vars_[params_.index_of(name)]; }

    Var linear(Var x, const std::string& prefix) {
        return tape_.add_row(tape_.matmul(x, p(prefix + ".weight")), p(prefix + ".bias"));
    }

    Var norm(Var x, const std::string& prefix) { return tape_.layer_norm(x, p(prefix + ".gamma"), p(prefix + ".beta")); }

    Var drop(Var x) {
        if (dropout_rng_ == nullptr || cfg_.dropout_rate <= 0.0) return x;
        return tape_.dropout(x, cfg_.dropout_rate, *dropout_rng_);
    }

    Var feed_forward(Var x, const std::string& prefix) {
        return linear(tape_.gelu(linear(x, prefix + ".fc1")), prefix + ".fc2");
    }

    Var attention(Var queries, Var memory, const std::string& prefix, bool causal) {
        Var q = linear(queries, prefix + ".q");
        Var k = linear(memory, prefix + ".k");
        Var v = linear(memory, prefix + ".v");
        const int dh = cfg_.d / cfg_.heads;
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        std::vector<Var> heads;
        heads.reserve(static_cast<std::size_t>(cfg_.heads));
        for (int h = 0; h < cfg_.heads; ++h) {
            Var qh = tape_.slice_cols(q, h * dh, dh);
            Var kh = tape_.slice_cols(k, h * dh, dh);
            Var vh = tape_.slice_cols(v, h * dh, dh);
            Var weights = tape_.softmax_rows(tape_.scale(tape_.matmul_nt(qh, kh), scale), causal);
            heads.push_back(tape_.matmul(weights, vh));
        }
        return linear(tape_.concat_cols(heads), prefix + ".o");
    }

    Tape& tape_;
    const ModelParams& params_;
    const ModelConfig& cfg_;
    Rng* dropout_rng_;
    std::vector<Var> vars_;
};

std::vector<int> decoder_inputs(const Caption& caption) {
    if (caption.tokens.size() < 2) throw data_error("caption needs at least BOS and one target");
    return {caption.tokens.begin(), caption.tokens.end() - 1};
}

std::vector<int> decoder_targets(const Caption& caption) { return {caption.tokens.begin() + 1, caption.tokens.end()}; }

} // namespace

Matrix embed_patches(std::span<const PatchImage> patches, const ModelParams& params, const ModelConfig& cfg) {
    Tape tape(false);
    Network net(tape, params, cfg, nullptr);
    return tape.value(net.embed(patches));
}

Matrix encode(const Matrix& patch_embeds, const ModelParams& params, const ModelConfig& cfg) {
    if (patch_embeds.rows() < 1) throw data_error("encode needs at least one patch");
    if (patch_embeds.cols() != cfg.d) throw data_error("patch embedding width does not match d");
    Tape tape(false);
    Network net(tape, params, cfg, nullptr);
    return tape.value(net.encode(tape.constant(patch_embeds)));
}

Eigen::VectorXd predict_subtype(const Matrix& encoder_states, const ModelParams& params, const ModelConfig& cfg) {
    Tape tape(false);
    Network net(tape, params, cfg, nullptr);
    return tape.value(net.subtype_logits(tape.constant(encoder_states))).row(0).transpose();
}

Matrix decode_sequence(std::span<const int> inputs, const Matrix& encoder_states, const ModelParams& params,
                       const ModelConfig& cfg) {
    Tape tape(false);
    Network net(tape, params, cfg, nullptr);
    return tape.value(net.decode(inputs, tape.constant(encoder_states)));
}

Eigen::VectorXd decode_step(std::span<const int> prefix, const Matrix& encoder_states, const ModelParams& params,
                            const ModelConfig& cfg) {
    if (prefix.empty() || prefix.front() != kBosId) throw data_error("prefix must start with BOS");
    if (static_cast<int>(prefix.size()) > cfg.max_caption_len + 1) throw data_error("prefix too long");
    const Matrix logits = decode_sequence(prefix, encoder_states, params, cfg);
    return logits.row(logits.rows() - 1).transpose();
}

ForwardOutput forward(const TrainingSample& sample, const ModelParams& params, const ModelConfig& cfg,
                      Rng* dropout_rng) {
    Tape tape(false);
    Network net(tape, params, cfg, dropout_rng);
    Var states = net.encode(net.embed(sample.patches));
    ForwardOutput out;
    out.encoder_states = tape.value(states);
    out.subtype_logits = tape.value(net.subtype_logits(states));
    out.caption_logits = tape.value(net.decode(decoder_inputs(sample.caption), states));
    return out;
}

LossBreakdown loss(const ForwardOutput& output, const Caption& target, int subtype, double beta) {
    if (beta < 0.0) throw config_error("beta must be non-negative");
    const auto targets = decoder_targets(target);
    const Matrix& z = output.caption_logits;
    if (z.rows() != static_cast<Eigen::Index>(targets.size())) throw data_error("caption logits do not match target");
    double total = 0.0;
    int counted = 0;
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const int t = targets[static_cast<std::size_t>(r)];
        if (t == kPadId) continue;
        const double mx = z.row(r).maxCoeff();
        const double lse = mx + std::log((z.row(r).array() - mx).exp().sum());
        total += lse - z(r, t);
        ++counted;
    }
    if (counted == 0) throw data_error("no supervised tokens");
    const Matrix& s = output.subtype_logits;
    if (subtype < 0 || subtype >= s.cols()) throw data_error("subtype label out of range");
    const double smx = s.maxCoeff();
    const double slse = smx + std::log((s.array() - smx).exp().sum());
    LossBreakdown out;
    out.caption = total / counted;
    out.subtype = slse - s(0, subtype);
    out.total = out.caption + beta * out.subtype;
    return out;
}

GradientResult backward(const TrainingSample& sample, const ModelParams& params, const ModelConfig& cfg, double beta,
                        Rng* dropout_rng) {
    if (beta < 0.0) throw config_error("beta must be non-negative");
    if (sample.subtype < 0 || sample.subtype >= cfg.K) throw data_error("subtype label out of range");
    Tape tape(true);
    Network net(tape, params, cfg, dropout_rng);
    Var states = net.encode(net.embed(sample.patches));
    Var subtype_logits = net.subtype_logits(states);
    Var caption_logits = net.decode(decoder_inputs(sample.caption), states);

    const auto targets = decoder_targets(sample.caption);
    Var caption_loss = tape.cross_entropy(caption_logits, targets, kPadId);
    const int label[1] = {sample.subtype};
    Var subtype_loss = tape.cross_entropy(subtype_logits, label, -1);
    Var total = tape.add(caption_loss, tape.scale(subtype_loss, beta));
    tape.backward(total);

    GradientResult result;
    result.loss.caption = tape.value(caption_loss)(0, 0);
    result.loss.subtype = tape.value(subtype_loss)(0, 0);
    result.loss.total = tape.value(total)(0, 0);
    result.grads = params.zeros_like();
    const auto& vars = net.parameter_vars();
    for (std::size_t i = 0; i < params.count(); ++i) {
        const Matrix& g = tape.grad(vars[i]);
        if (g.size() != 0) result.grads.value(i) = g;
        if (!result.grads.value(i).allFinite()) throw numeric_error("non-finite gradient for " + params.name(i));
    }
    return result;
}

} // namespace sgmt
