// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace realism {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace ad {

/// Handle to a node on a Graph tape.
struct Var {
    int id = -1;
    [[nodiscard]] bool valid() const noexcept { return id >= 0; }
};

/// Single-use reverse-mode tape over dense row-major matrices.
///
/// Leaves either reference external storage (weights, cached inputs) or own a
/// copy. A leaf created with a gradient sink receives its gradient by
/// accumulation when backward() runs; leaves without a sink are constants and
/// nothing upstream of them is differentiated.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var constant(Matrix value);
    /// References `value`; it must outlive the graph.
    Var constant_ref(const Matrix& value);
    /// References `value`; gradients are added into `*grad_sink` when non-null.
    Var parameter(const Matrix& value, Matrix* grad_sink);

    [[nodiscard]] const Matrix& value(Var v) const;
    [[nodiscard]] bool requires_grad(Var v) const;
    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

    Var matmul(Var a, Var b);
    /// a * b^T
    Var matmul_nt(Var a, Var b);
    Var add(Var a, Var b);
    /// Adds a 1×n row to every row of a.
    Var add_row(Var a, Var row);
    Var scale(Var a, double s);
    Var gelu(Var a);
    Var sigmoid(Var a);
    /// Row-wise normalization with learned 1×n gain and bias.
    Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
    /// Row-wise softmax where row i may attend columns j < prefix + i + 1.
    Var causal_softmax(Var scores, int prefix);
    /// Max over each consecutive block of `segment` rows: (k*segment)×n -> k×n.
    /// The first maximal row of a block wins ties.
    Var segment_max(Var a, int segment);
    Var concat_rows(std::span<const Var> parts);
    Var concat_cols(std::span<const Var> parts);
    Var slice_rows(Var a, int begin, int count);
    Var slice_cols(Var a, int begin, int count);
    /// Embedding lookup: row k of the result is row ids[k] of the table.
    Var gather_rows(Var table, std::span<const int> ids);
    /// (pred - target)^2 for a 1×1 prediction.
    Var squared_error(Var pred, double target);
    /// |pred - target| for a 1×1 prediction.
    Var absolute_error(Var pred, double target);
    /// -log softmax(logits)[target] for a 1×V logits row.
    Var cross_entropy(Var logits, int target);

    /// Seeds d(loss)/d(loss) = 1 for a 1×1 node and propagates to every sink.
    void backward(Var loss);

private:
    struct Node {
        Matrix owned;
        const Matrix* ref = nullptr;
        Matrix grad;
        Matrix* sink = nullptr;
        bool needs_grad = false;
        std::function<void(Graph&, int)> back;
    };

    [[nodiscard]] const Matrix& val(int id) const {
        const auto& n = nodes_[static_cast<std::size_t>(id)];
        return n.ref ? *n.ref : n.owned;
    }
    Matrix& grad_of(int id);
    void accumulate(int id, const Matrix& g);
    bool any_needs(std::initializer_list<int> ids) const;
    Var push(Matrix value, bool needs_grad, std::function<void(Graph&, int)> back);

    std::vector<Node> nodes_;
};

}  // namespace ad
}  // namespace realism
