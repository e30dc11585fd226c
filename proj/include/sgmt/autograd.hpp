#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "sgmt/rng.hpp"

namespace sgmt {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace ag {

/// Handle to a node on a Tape.
struct Var {
    int id = -1;
};

/// Reverse-mode tape over dense row-major matrices.
///
/// Nodes are appended in evaluation order, so reverse creation order is a
/// valid topological order for the backward sweep. Parameters are bound by
/// reference and must outlive the tape. A tape built with `record = false`
/// stores values only and cannot be differentiated.
class Tape {
public:
    explicit Tape(bool record = true) : record_(record) {}

    Var constant(Matrix value);
    Var parameter(const Matrix& value);

    const Matrix& value(Var v) const;
    /// Gradient accumulated by backward(); empty when the node was not reached.
    const Matrix& grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].grad; }
    std::size_t size() const { return nodes_.size(); }

    /// Seeds d(out)/d(out) = 1 for a 1x1 node and sweeps backwards.
    void backward(Var out);

    Var matmul(Var a, Var b);
    /// a * b^T
    Var matmul_nt(Var a, Var b);
    Var add(Var a, Var b);
    /// Adds a 1 x cols row to every row of a.
    Var add_row(Var a, Var row);
    Var scale(Var a, double s);
    Var gelu(Var a);
    Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
    /// Row-wise softmax; with `causal`, entry (i, j) is masked for j > i.
    Var softmax_rows(Var x, bool causal);
    Var concat_rows(Var a, Var b);
    Var slice_cols(Var a, int start, int count);
    Var slice_rows(Var a, int start, int count);
    Var concat_cols(std::span<const Var> parts);
    Var gather_rows(Var table, std::span<const int> ids);
    /// x holds `count` images of h*w pixel rows by channel columns. Output rows
    /// are output pixels, columns are (ky, kx, channel) with zero padding.
    Var im2col(Var x, int count, int h, int w, int kernel, int stride, int pad);
    /// Mean of each of `segments` equal consecutive row blocks.
    Var segment_mean(Var x, int segments);
    Var dropout(Var x, double rate, Rng& rng);
    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `logits`; rows whose target equals `ignore_id` are skipped. 1 x 1.
    Var cross_entropy(Var logits, std::span<const int> targets, int ignore_id);

private:
    struct Node {
        Matrix value;
        const Matrix* ref = nullptr;
        Matrix grad;
        bool requires_grad = false;
        std::function<void()> back;
    };

    Var push(Matrix value, bool requires_grad);
    void set_backward(Var v, std::function<void()> back);
    bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }
    Matrix& grad_ref(int id);
    const Matrix& out_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

    bool record_;
    std::vector<Node> nodes_;
};

} // namespace ag
} // namespace sgmt
