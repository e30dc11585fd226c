#include "sgmt/autograd.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "sgmt/error.hpp"

namespace sgmt::ag {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw numeric_error(std::string("tape: ") + what);
}

} // namespace

Var Tape::push(Matrix value, bool requires_grad) {
    Node node;
    node.value = std::move(value);
    node.requires_grad = record_ && requires_grad;
    nodes_.push_back(std::move(node));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::set_backward(Var v, std::function<void()> back) {
    auto& node = nodes_[static_cast<std::size_t>(v.id)];
    if (node.requires_grad) node.back = std::move(back);
}

Matrix& Tape::grad_ref(int id) {
    auto& node = nodes_[static_cast<std::size_t>(id)];
    if (node.grad.size() == 0) {
        const Matrix& v = node.ref ? *node.ref : node.value;
        node.grad = Matrix::Zero(v.rows(), v.cols());
    }
    return node.grad;
}

Var Tape::constant(Matrix value) { return push(std::move(value), false); }

Var Tape::parameter(const Matrix& value) {
    Var v = push(Matrix(), true);
    nodes_.back().ref = &value;
    return v;
}

const Matrix& Tape::value(Var v) const {
    const auto& node = nodes_[static_cast<std::size_t>(v.id)];
    return node.ref ? *node.ref : node.value;
}

void Tape::backward(Var out) {
    require(record_, "backward on a non-recording tape");
    require(value(out).size() == 1, "backward needs a scalar output");
    for (auto& node : nodes_) node.grad.resize(0, 0);
    grad_ref(out.id).setConstant(1.0);
    for (int id = out.id; id >= 0; --id) {
        auto& node = nodes_[static_cast<std::size_t>(id)];
        if (node.back && node.grad.size() != 0) node.back();
    }
}

Var Tape::matmul(Var a, Var b) {
    require(value(a).cols() == value(b).rows(), "matmul shape mismatch");
    Matrix out;
    out.noalias() = value(a) * value(b);
    Var c = push(std::move(out), needs(a) || needs(b));
    set_backward(c, [this, a, b, c] {
        const Matrix& gc = out_grad(c.id);
        if (needs(a)) grad_ref(a.id).noalias() += gc * value(b).transpose();
        if (needs(b)) grad_ref(b.id).noalias() += value(a).transpose() * gc;
    });
    return c;
}

Var Tape::matmul_nt(Var a, Var b) {
    require(value(a).cols() == value(b).cols(), "matmul_nt shape mismatch");
    Matrix out;
    out.noalias() = value(a) * value(b).transpose();
    Var c = push(std::move(out), needs(a) || needs(b));
    set_backward(c, [this, a, b, c] {
        const Matrix& gc = out_grad(c.id);
        if (needs(a)) grad_ref(a.id).noalias() += gc * value(b);
        if (needs(b)) grad_ref(b.id).noalias() += gc.transpose() * value(a);
    });
    return c;
}

Var Tape::add(Var a, Var b) {
    require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "add shape mismatch");
    Var c = push(value(a) + value(b), needs(a) || needs(b));
    set_backward(c, [this, a, b, c] {
        if (needs(a)) grad_ref(a.id) += out_grad(c.id);
        if (needs(b)) grad_ref(b.id) += out_grad(c.id);
    });
    return c;
}

Var Tape::add_row(Var a, Var row) {
    require(value(row).rows() == 1 && value(row).cols() == value(a).cols(), "add_row shape mismatch");
    Matrix out = value(a);
    out.rowwise() += value(row).row(0);
    Var c = push(std::move(out), needs(a) || needs(row));
    set_backward(c, [this, a, row, c] {
        if (needs(a)) grad_ref(a.id) += out_grad(c.id);
        if (needs(row)) grad_ref(row.id) += out_grad(c.id).colwise().sum();
    });
    return c;
}

Var Tape::scale(Var a, double s) {
    Var c = push(value(a) * s, needs(a));
    set_backward(c, [this, a, c, s] { grad_ref(a.id) += out_grad(c.id) * s; });
    return c;
}

Var Tape::gelu(Var a) {
    const Matrix& x = value(a);
    Matrix out(x.rows(), x.cols());
    const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double v = x.data()[i];
        out.data()[i] = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
    }
    Var c = push(std::move(out), needs(a));
    set_backward(c, [this, a, c, inv_sqrt2] {
        const Matrix& xv = value(a);
        const Matrix& gc = out_grad(c.id);
        Matrix& ga = grad_ref(a.id);
        const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
        for (Eigen::Index i = 0; i < xv.size(); ++i) {
            const double v = xv.data()[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
            ga.data()[i] += gc.data()[i] * (cdf + v * pdf);
        }
    });
    return c;
}

Var Tape::layer_norm(Var x, Var gamma, Var beta, double eps) {
    const Matrix& xv = value(x);
    const Eigen::Index n = xv.cols();
    require(value(gamma).rows() == 1 && value(gamma).cols() == n, "layer_norm gamma shape");
    require(value(beta).rows() == 1 && value(beta).cols() == n, "layer_norm beta shape");
    Matrix xhat(xv.rows(), n);
    Eigen::VectorXd rstd(xv.rows());
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
        const double mean = xv.row(r).mean();
        const double var = (xv.row(r).array() - mean).square().mean();
        rstd(r) = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (xv.row(r).array() - mean) * rstd(r);
    }
    Matrix out = xhat.array().rowwise() * value(gamma).row(0).array();
    out.rowwise() += value(beta).row(0);
    Var c = push(std::move(out), needs(x) || needs(gamma) || needs(beta));
    set_backward(c, [this, x, gamma, beta, c, xhat = std::move(xhat), rstd = std::move(rstd)] {
        const Matrix& gc = out_grad(c.id);
        if (needs(gamma)) grad_ref(gamma.id) += (gc.array() * xhat.array()).colwise().sum().matrix();
        if (needs(beta)) grad_ref(beta.id) += gc.colwise().sum();
        if (needs(x)) {
            Matrix& gx = grad_ref(x.id);
            const auto g = value(gamma).row(0).array();
            for (Eigen::Index r = 0; r < gc.rows(); ++r) {
                const Eigen::ArrayXd dxhat = (gc.row(r).array() * g).transpose();
                const Eigen::ArrayXd xh = xhat.row(r).array().transpose();
                const double mean_d = dxhat.mean();
                const double mean_dx = (dxhat * xh).mean();
                gx.row(r).array() += (rstd(r) * (dxhat - mean_d - xh * mean_dx)).transpose();
            }
        }
    });
    return c;
}

Var Tape::softmax_rows(Var x, bool causal) {
    const Matrix& xv = value(x);
    require(!causal || xv.rows() == xv.cols(), "causal softmax needs a square input");
    Matrix out = Matrix::Zero(xv.rows(), xv.cols());
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
        const Eigen::Index len = causal ? r + 1 : xv.cols();
        const double mx = xv.row(r).head(len).maxCoeff();
        double sum = 0.0;
        for (Eigen::Index j = 0; j < len; ++j) {
            const double e = std::exp(xv(r, j) - mx);
            out(r, j) = e;
            sum += e;
        }
        out.row(r).head(len) /= sum;
    }
    Var c = push(std::move(out), needs(x));
    set_backward(c, [this, x, c] {
        const Matrix& y = value(c);
        const Matrix& gc = out_grad(c.id);
        Matrix& gx = grad_ref(x.id);
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
            const double dot = y.row(r).dot(gc.row(r));
            gx.row(r).array() += y.row(r).array() * (gc.row(r).array() - dot);
        }
    });
    return c;
}

Var Tape::concat_rows(Var a, Var b) {
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    require(av.cols() == bv.cols(), "concat_rows column mismatch");
    Matrix out(av.rows() + bv.rows(), av.cols());
    out.topRows(av.rows()) = av;
    out.bottomRows(bv.rows()) = bv;
    Var c = push(std::move(out), needs(a) || needs(b));
    set_backward(c, [this, a, b, c] {
        const Matrix& gc = out_grad(c.id);
        const Eigen::Index ra = value(a).rows();
        if (needs(a)) grad_ref(a.id) += gc.topRows(ra);
        if (needs(b)) grad_ref(b.id) += gc.bottomRows(gc.rows() - ra);
    });
    return c;
}

Var Tape::slice_cols(Var a, int start, int count) {
    require(start >= 0 && count > 0 && start + count <= value(a).cols(), "slice_cols out of range");
    Var c = push(value(a).middleCols(start, count), needs(a));
    set_backward(c, [this, a, c, start, count] { grad_ref(a.id).middleCols(start, count) += out_grad(c.id); });
    return c;
}

Var Tape::slice_rows(Var a, int start, int count) {
    require(start >= 0 && count > 0 && start + count <= value(a).rows(), "slice_rows out of range");
    Var c = push(value(a).middleRows(start, count), needs(a));
    set_backward(c, [this, a, c, start, count] { grad_ref(a.id).middleRows(start, count) += out_grad(c.id); });
    return c;
}

Var Tape::concat_cols(std::span<const Var> parts) {
    require(!parts.empty(), "concat_cols needs parts");
    const Eigen::Index rows = value(parts.front()).rows();
    Eigen::Index cols = 0;
    bool grad = false;
    for (const Var p : parts) {
        require(value(p).rows() == rows, "concat_cols row mismatch");
        cols += value(p).cols();
        grad = grad || needs(p);
    }
    Matrix out(rows, cols);
    Eigen::Index at = 0;
    for (const Var p : parts) {
        out.middleCols(at, value(p).cols()) = value(p);
        at += value(p).cols();
    }
    Var c = push(std::move(out), grad);
    set_backward(c, [this, c, parts = std::vector<Var>(parts.begin(), parts.end())] {
        Eigen::Index offset = 0;
        for (const Var p : parts) {
            const Eigen::Index w = value(p).cols();
            if (needs(p)) grad_ref(p.id) += out_grad(c.id).middleCols(offset, w);
            offset += w;
        }
    });
    return c;
}

Var Tape::gather_rows(Var table, std::span<const int> ids) {
    const Matrix& t = value(table);
    Matrix out(static_cast<Eigen::Index>(ids.size()), t.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        require(ids[i] >= 0 && ids[i] < t.rows(), "gather_rows id out of range");
        out.row(static_cast<Eigen::Index>(i)) = t.row(ids[i]);
    }
    Var c = push(std::move(out), needs(table));
    set_backward(c, [this, table, c, ids = std::vector<int>(ids.begin(), ids.end())] {
        Matrix& gt = grad_ref(table.id);
        const Matrix& gc = out_grad(c.id);
        for (std::size_t i = 0; i < ids.size(); ++i) gt.row(ids[i]) += gc.row(static_cast<Eigen::Index>(i));
    });
    return c;
}

Var Tape::im2col(Var x, int count, int h, int w, int kernel, int stride, int pad) {
    const Matrix& xv = value(x);
    require(xv.rows() == static_cast<Eigen::Index>(count) * h * w, "im2col row count");
    const int ch = static_cast<int>(xv.cols());
    const int ho = (h + 2 * pad - kernel) / stride + 1;
    const int wo = (w + 2 * pad - kernel) / stride + 1;
    require(ho > 0 && wo > 0, "im2col output is empty");
    // Source row of every (output row, kernel tap), -1 for padding.
    std::vector<int> source(static_cast<std::size_t>(count) * ho * wo * kernel * kernel, -1);
    std::size_t s = 0;
    for (int n = 0; n < count; ++n)
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox)
                for (int ky = 0; ky < kernel; ++ky)
                    for (int kx = 0; kx < kernel; ++kx, ++s) {
                        const int iy = oy * stride - pad + ky;
                        const int ix = ox * stride - pad + kx;
                        if (iy >= 0 && iy < h && ix >= 0 && ix < w) source[s] = (n * h + iy) * w + ix;
                    }
    const Eigen::Index taps = static_cast<Eigen::Index>(kernel) * kernel;
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(count) * ho * wo, taps * ch);
    for (Eigen::Index r = 0; r < out.rows(); ++r)
        for (Eigen::Index t = 0; t < taps; ++t) {
            const int src = source[static_cast<std::size_t>(r * taps + t)];
            if (src >= 0) out.row(r).segment(t * ch, ch) = xv.row(src);
        }
    Var c = push(std::move(out), needs(x));
    set_backward(c, [this, x, c, ch, taps, source = std::move(source)] {
        Matrix& gx = grad_ref(x.id);
        const Matrix& gc = out_grad(c.id);
        for (Eigen::Index r = 0; r < gc.rows(); ++r)
            for (Eigen::Index t = 0; t < taps; ++t) {
                const int src = source[static_cast<std::size_t>(r * taps + t)];
                if (src >= 0) gx.row(src) += gc.row(r).segment(t * ch, ch);
            }
    });
    return c;
}

Var Tape::segment_mean(Var x, int segments) {
    const Matrix& xv = value(x);
    require(segments > 0 && xv.rows() % segments == 0, "segment_mean needs equal segments");
    const Eigen::Index len = xv.rows() / segments;
    Matrix out(segments, xv.cols());
    for (int s = 0; s < segments; ++s) out.row(s) = xv.middleRows(s * len, len).colwise().mean();
    Var c = push(std::move(out), needs(x));
    set_backward(c, [this, x, c, segments, len] {
        Matrix& gx = grad_ref(x.id);
        const Matrix& gc = out_grad(c.id);
        const double inv = 1.0 / static_cast<double>(len);
        for (int s = 0; s < segments; ++s) gx.middleRows(s * len, len).rowwise() += gc.row(s) * inv;
    });
    return c;
}

Var Tape::dropout(Var x, double rate, Rng& rng) {
    if (rate <= 0.0) return x;
    require(rate < 1.0, "dropout rate must be below 1");
    const Matrix& xv = value(x);
    Matrix mask(xv.rows(), xv.cols());
    const double keep = 1.0 / (1.0 - rate);
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < rate ? 0.0 : keep;
    Var c = push(xv.cwiseProduct(mask), needs(x));
    set_backward(c, [this, x, c, mask = std::move(mask)] { grad_ref(x.id) += out_grad(c.id).cwiseProduct(mask); });
    return c;
}

Var Tape::cross_entropy(Var logits, std::span<const int> targets, int ignore_id) {
    const Matrix& z = value(logits);
    require(z.rows() == static_cast<Eigen::Index>(targets.size()), "cross_entropy target count");
    Matrix probs(z.rows(), z.cols());
    double total = 0.0;
    int counted = 0;
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const double mx = z.row(r).maxCoeff();
        probs.row(r) = (z.row(r).array() - mx).exp();
        const double sum = probs.row(r).sum();
        probs.row(r) /= sum;
        const int t = targets[static_cast<std::size_t>(r)];
        if (t == ignore_id) continue;
        require(t >= 0 && t < z.cols(), "cross_entropy target out of range");
        total += -(z(r, t) - mx - std::log(sum));
        ++counted;
    }
    if (counted == 0) throw data_error("no supervised tokens");
    Matrix out(1, 1);
    out(0, 0) = total / counted;
    Var c = push(std::move(out), needs(logits));
    set_backward(c, [this, logits, c, counted, ignore_id, probs = std::move(probs),
                     targets = std::vector<int>(targets.begin(), targets.end())] {
        const double g = out_grad(c.id)(0, 0) / counted;
        Matrix& gz = grad_ref(logits.id);
        for (Eigen::Index r = 0; r < probs.rows(); ++r) {
            const int t = targets[static_cast<std::size_t>(r)];
            if (t == ignore_id) continue;
            gz.row(r) += probs.row(r) * g;
            gz(r, t) -= g;
        }
    });
    return c;
}

} // namespace sgmt::ag
