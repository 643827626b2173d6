#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "error.hpp"

namespace scnn {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Node;
using NodePtr = std::shared_ptr<Node>;

// Accumulates d(root)/d(parent_i) into parent_adj[i] given d(root)/d(self).
// Entries of parent_adj are null for parents that do not need gradients.
using BackwardFn =
    std::function<void(const Node& self, const double* self_adj, const std::vector<double*>& parent_adj)>;

// One value in a define-by-run graph. Gradients accumulate into `grad` across
// backward() calls until zero_grad(); each backward() pass itself propagates
// through fresh adjoint buffers so repeated calls add exact copies.
class Node {
 public:
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first backward() reaches this node
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  BackwardFn backward_fn;

  std::size_t size() const { return data.size(); }
  // Convenience for scalar nodes.
  double value() const;
};

// Graph recording is on by default; inside a NoGradGuard ops produce plain
// values with no parents, which keeps inference memory flat.
bool grad_enabled();
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();

 private:
  bool prev_;
};

// When enabled, every op scans its output and raises a numeric error on the
// first non-finite element, naming the op and flat index.
bool nan_guard_enabled();
void set_nan_guard(bool on);

// Leaf constructors.
NodePtr constant(Shape shape, double fill);
NodePtr tensor(Shape shape, std::vector<double> data);              // no grad
NodePtr variable(Shape shape, std::vector<double> data);            // requires grad

// Elementwise arithmetic with numpy-style trailing-dimension broadcast.
NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr sub(const NodePtr& a, const NodePtr& b);
NodePtr mul(const NodePtr& a, const NodePtr& b);
NodePtr div(const NodePtr& a, const NodePtr& b);

NodePtr scale(const NodePtr& x, double factor);
NodePtr add_scalar(const NodePtr& x, double shift);

// Elementwise nonlinearities.
NodePtr square(const NodePtr& x);
NodePtr sqrt(const NodePtr& x);
NodePtr log(const NodePtr& x);
NodePtr relu(const NodePtr& x);
NodePtr softplus(const NodePtr& x);

// [p,q] x [q,r] -> [p,r]; per-element accumulation runs over k ascending so
// results are bit-identical to a plain nested-loop evaluation.
NodePtr matmul(const NodePtr& a, const NodePtr& b);

// x:[s,q], w:[r,q], optional bias b:[r] -> x * w^T + b, shape [s,r].
NodePtr linear(const NodePtr& x, const NodePtr& w, const NodePtr& b);

// Row-wise softmax of a [rows, cols] matrix, max-subtracted for stability.
NodePtr softmax_rows(const NodePtr& x);

// Trailing mean over a dilated causal window along `time_axis`: output at
// position t averages x at {t, t-dilation, ..., t-(window-1)*dilation},
// dropping taps before the series start (partial windows average what exists,
// taps accumulate oldest-last, i.e. in tap order i = 0..window-1).
NodePtr window_mean(const NodePtr& x, int window, int dilation, int time_axis);

NodePtr concat(const std::vector<NodePtr>& parts, int axis);

// Elementwise multiply by a constant 0/1 mask of identical shape. Gradients
// through masked elements are exactly zero.
NodePtr zero_mask(const NodePtr& x, const std::vector<double>& mask);

NodePtr reshape(const NodePtr& x, Shape shape);

// Rank-3 [n, t, c] helpers along the time axis.
// out[:, t, :] = x[:, t-steps, :] for t >= steps, zero before.
NodePtr shift_time(const NodePtr& x, int steps);
// out[:, p, :] = x[:, indices[p], :]; repeated indices scatter-add gradients.
NodePtr gather_time(const NodePtr& x, const std::vector<int>& indices);

// Drops the leading axis at a fixed index: [k, rest...] -> [rest...].
NodePtr slice0(const NodePtr& x, int index);

// hist:[n, lags, c], w:[horizons, lags, c, c], optional bias b:[horizons, c]
// -> out[n, i, c] = b[i, c] + sum_j sum_q w[i, j, c, q] * hist[n, j, q].
NodePtr ar_apply(const NodePtr& hist, const NodePtr& w, const NodePtr& b);

NodePtr sum_all(const NodePtr& x);

// Reverse-mode pass from a scalar root. Adds this pass's exact adjoints into
// `grad` of every reachable node with requires_grad.
void backward(const NodePtr& root);

// A named trainable leaf plus its Adam state.
struct Parameter {
  std::string name;
  NodePtr node;
  std::vector<double> m;
  std::vector<double> v;
  long long steps = 0;
};

void zero_grad(std::vector<Parameter>& params);
void adam_step(std::vector<Parameter>& params, double lr, double beta1, double beta2, double eps);

}  // namespace scnn
