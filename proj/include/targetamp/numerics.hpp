#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

namespace targetamp {

// Dense row-major 2-D tensor of 64-bit reals. The whole model fits in these;
// higher-rank data is flattened by callers.
struct Tensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    static Tensor zeros(std::size_t r, std::size_t c) { return Tensor(r, c, 0.0); }

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    double* row_ptr(std::size_t r) { return data.data() + r * cols; }
    const double* row_ptr(std::size_t r) const { return data.data() + r * cols; }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
    bool all_finite() const;
    void fill(double v);
};

// One vertex of the computation graph. `value` is immutable after the forward
// pass; `backward_fn` pulls from this node's grad and accumulates into the
// parents' grads.
struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    std::size_t rows() const { return value.rows; }
    std::size_t cols() const { return value.cols; }
};

using NodePtr = std::shared_ptr<Node>;

// Leaf holding trainable parameters (grad is kept across graph rebuilds until
// explicitly zeroed by the optimizer).
NodePtr make_param(Tensor value);
// Leaf excluded from differentiation (inputs, additive masks).
NodePtr make_constant(Tensor value);

NodePtr matmul(const NodePtr& a, const NodePtr& b);
NodePtr transpose(const NodePtr& a);
// Same-shape add, or broadcast of a [1 x n] row `b` over every row of `a`.
NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr scale(const NodePtr& a, double c);
NodePtr relu(const NodePtr& a);
NodePtr row_softmax(const NodePtr& a);
NodePtr layer_norm(const NodePtr& x, const NodePtr& gain, const NodePtr& bias,
                   double eps = 1e-5);
// Mean negative log-softmax probability of the true class, shape [1 x 1].
NodePtr cross_entropy(const NodePtr& logits, const std::vector<int>& labels);
// Row gather with scatter-add backward; also serves as the embedding lookup.
NodePtr gather_rows(const NodePtr& table, const std::vector<std::size_t>& indices);
NodePtr slice_cols(const NodePtr& a, std::size_t start, std::size_t len);
NodePtr concat_cols(const std::vector<NodePtr>& parts);
NodePtr concat_rows(const std::vector<NodePtr>& parts);
// Repeat a [1 x n] row k times; backward sums the incoming rows.
NodePtr tile_rows(const NodePtr& a, std::size_t k);
NodePtr sum_all(const NodePtr& a);

// Reverse-mode pass from a [1 x 1] loss. Each reachable node is visited once.
// Throws std::logic_error when invoked twice on the same graph without
// zero_grad in between.
void backward(const NodePtr& loss);
// Zeroes grads of every node reachable from `root`.
void zero_grad(const NodePtr& root);

// Numerically stable softmax of one row, in place helpers used by eval paths.
void softmax_row_inplace(double* x, std::size_t n);

struct GradCheckResult {
    double max_rel_err = 0.0;
    // Worst coordinate, for diagnostics.
    std::size_t param_index = 0;
    std::size_t coord = 0;
    double autodiff_grad = 0.0;
    double fd_grad = 0.0;
};

// Central-difference check of every coordinate of every param against the
// reverse-mode gradient. `f` must rebuild the graph from the params on each
// call. Relative error is |a - b| / max(1, |a|, |b|).
GradCheckResult grad_check(const std::function<NodePtr()>& f,
                           const std::vector<NodePtr>& params, double h = 1e-5);

}  // namespace targetamp
