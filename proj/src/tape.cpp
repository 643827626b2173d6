#include "tape.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

namespace scnn {

namespace {

thread_local bool g_grad_enabled = true;
thread_local bool g_nan_guard = false;

void check_finite(const char* op, const Node& node) {
  for (std::size_t i = 0; i < node.data.size(); ++i) {
    if (!std::isfinite(node.data[i])) {
      fail_numeric(std::string(op) + ": non-finite value at flat index " + std::to_string(i));
    }
  }
}

NodePtr make_node(const char* op, Shape shape, std::vector<double> data, std::vector<NodePtr> parents,
                  BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  if (g_nan_guard) check_finite(op, *node);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs = needs || p->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(fn);
  }
  return node;
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const int rank = static_cast<int>(std::max(a.size(), b.size()));
  Shape out(rank);
  int da = static_cast<int>(a.size()) - 1;
  int db = static_cast<int>(b.size()) - 1;
  for (int d = rank - 1; d >= 0; --d, --da, --db) {
    const int va = da >= 0 ? a[da] : 1;
    const int vb = db >= 0 ? b[db] : 1;
    if (va != vb && va != 1 && vb != 1) {
      fail_data(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                " do not broadcast");
    }
    out[d] = std::max(va, vb);
  }
  return out;
}

// Strides of `s` right-aligned into `out` coordinates, zero on broadcast dims.
std::vector<long> aligned_strides(const Shape& s, const Shape& out) {
  const int rank = static_cast<int>(out.size());
  const int off = rank - static_cast<int>(s.size());
  std::vector<long> strides(rank, 0);
  long acc = 1;
  for (int d = static_cast<int>(s.size()) - 1; d >= 0; --d) {
    strides[d + off] = (s[d] == 1) ? 0 : acc;
    acc *= s[d];
  }
  return strides;
}

template <class F>
void bcast_walk(const Shape& out_shape, const Shape& sa, const Shape& sb, F visit) {
  const std::size_t n = numel(out_shape);
  const int rank = static_cast<int>(out_shape.size());
  const auto stra = aligned_strides(sa, out_shape);
  const auto strb = aligned_strides(sb, out_shape);
  std::vector<int> idx(rank, 0);
  long oa = 0;
  long ob = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    visit(flat, static_cast<std::size_t>(oa), static_cast<std::size_t>(ob));
    for (int d = rank - 1; d >= 0; --d) {
      ++idx[d];
      oa += stra[d];
      ob += strb[d];
      if (idx[d] < out_shape[d]) break;
      idx[d] = 0;
      oa -= stra[d] * out_shape[d];
      ob -= strb[d] * out_shape[d];
    }
  }
}

// fval(a, b); dfa/dfb give the local partials at one element.
template <class FV, class FA, class FB>
NodePtr elementwise_binary(const char* op, const NodePtr& a, const NodePtr& b, FV fval, FA dfa, FB dfb) {
  const Shape out_shape = broadcast_shape(a->shape, b->shape, op);
  const std::size_t n = numel(out_shape);
  std::vector<double> out(n);
  const bool same = a->shape == b->shape;
  if (same) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fval(a->data[i], b->data[i]);
  } else {
    bcast_walk(out_shape, a->shape, b->shape, [&](std::size_t flat, std::size_t oa, std::size_t ob) {
      out[flat] = fval(a->data[oa], b->data[ob]);
    });
  }
  BackwardFn fn = [dfa, dfb](const Node& self, const double* adj, const std::vector<double*>& padj) {
    const Node& a = *self.parents[0];
    const Node& b = *self.parents[1];
    double* da = padj[0];
    double* db = padj[1];
    if (a.shape == b.shape) {
      for (std::size_t i = 0; i < self.size(); ++i) {
        if (da) da[i] += dfa(a.data[i], b.data[i]) * adj[i];
        if (db) db[i] += dfb(a.data[i], b.data[i]) * adj[i];
      }
    } else {
      bcast_walk(self.shape, a.shape, b.shape, [&](std::size_t flat, std::size_t oa, std::size_t ob) {
        if (da) da[oa] += dfa(a.data[oa], b.data[ob]) * adj[flat];
        if (db) db[ob] += dfb(a.data[oa], b.data[ob]) * adj[flat];
      });
    }
  };
  return make_node(op, out_shape, std::move(out), {a, b}, std::move(fn));
}

template <class FV, class FD>
NodePtr elementwise_unary(const char* op, const NodePtr& x, FV fval, FD dfx) {
  std::vector<double> out(x->size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fval(x->data[i]);
  BackwardFn fn = [dfx](const Node& self, const double* adj, const std::vector<double*>& padj) {
    double* dx = padj[0];
    if (!dx) return;
    const Node& x = *self.parents[0];
    for (std::size_t i = 0; i < self.size(); ++i) dx[i] += dfx(x.data[i], self.data[i]) * adj[i];
  };
  return make_node(op, x->shape, std::move(out), {x}, std::move(fn));
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, int axis) {
  AxisSplit s;
  for (int d = 0; d < axis; ++d) s.outer *= static_cast<std::size_t>(shape[d]);
  s.len = static_cast<std::size_t>(shape[axis]);
  for (int d = axis + 1; d < static_cast<int>(shape.size()); ++d) {
    s.inner *= static_cast<std::size_t>(shape[d]);
  }
  return s;
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

double Node::value() const {
  if (data.size() != 1) fail_usage("value(): node has shape " + shape_str(shape) + ", expected a scalar");
  return data[0];
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool nan_guard_enabled() { return g_nan_guard; }
void set_nan_guard(bool on) { g_nan_guard = on; }

NodePtr constant(Shape shape, double fill) {
  auto node = std::make_shared<Node>();
  node->data.assign(numel(shape), fill);
  node->shape = std::move(shape);
  return node;
}

NodePtr tensor(Shape shape, std::vector<double> data) {
  if (data.size() != numel(shape)) {
    fail_usage("tensor: " + std::to_string(data.size()) + " values for shape " + shape_str(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  return node;
}

NodePtr variable(Shape shape, std::vector<double> data) {
  auto node = tensor(std::move(shape), std::move(data));
  node->requires_grad = true;
  return node;
}

NodePtr add(const NodePtr& a, const NodePtr& b) {
  return elementwise_binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

NodePtr sub(const NodePtr& a, const NodePtr& b) {
  return elementwise_binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

NodePtr mul(const NodePtr& a, const NodePtr& b) {
  return elementwise_binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

NodePtr div(const NodePtr& a, const NodePtr& b) {
  return elementwise_binary(
      "div", a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

NodePtr scale(const NodePtr& x, double factor) {
  return elementwise_unary(
      "scale", x, [factor](double v) { return factor * v; },
      [factor](double, double) { return factor; });
}

NodePtr add_scalar(const NodePtr& x, double shift) {
  return elementwise_unary(
      "add_scalar", x, [shift](double v) { return v + shift; }, [](double, double) { return 1.0; });
}

NodePtr square(const NodePtr& x) {
  return elementwise_unary(
      "square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

NodePtr sqrt(const NodePtr& x) {
  return elementwise_unary(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double, double out) { return 0.5 / out; });
}

NodePtr log(const NodePtr& x) {
  return elementwise_unary(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

NodePtr relu(const NodePtr& x) {
  return elementwise_unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

NodePtr softplus(const NodePtr& x) {
  return elementwise_unary(
      "softplus", x,
      [](double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
      [](double v, double) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      });
}

NodePtr matmul(const NodePtr& a, const NodePtr& b) {
  if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0]) {
    fail_data("matmul: incompatible shapes " + shape_str(a->shape) + " and " + shape_str(b->shape));
  }
  const std::size_t p = a->shape[0];
  const std::size_t q = a->shape[1];
  const std::size_t r = b->shape[1];
  std::vector<double> out(p * r, 0.0);
  for (std::size_t i = 0; i < p; ++i) {
    const double* arow = a->data.data() + i * q;
    double* crow = out.data() + i * r;
    for (std::size_t k = 0; k < q; ++k) {
      const double av = arow[k];
      const double* brow = b->data.data() + k * r;
      for (std::size_t j = 0; j < r; ++j) crow[j] += av * brow[j];
    }
  }
  BackwardFn fn = [p, q, r](const Node& self, const double* adj, const std::vector<double*>& padj) {
    const Node& a = *self.parents[0];
    const Node& b = *self.parents[1];
    if (double* da = padj[0]) {
      for (std::size_t i = 0; i < p; ++i) {
        const double* grow = adj + i * r;
        double* darow = da + i * q;
        for (std::size_t k = 0; k < q; ++k) {
          const double* brow = b.data.data() + k * r;
          double acc = 0.0;
          for (std::size_t j = 0; j < r; ++j) acc += grow[j] * brow[j];
          darow[k] += acc;
        }
      }
    }
    if (double* db = padj[1]) {
      for (std::size_t i = 0; i < p; ++i) {
        const double* arow = a.data.data() + i * q;
        const double* grow = adj + i * r;
        for (std::size_t k = 0; k < q; ++k) {
          const double av = arow[k];
          double* dbrow = db + k * r;
          for (std::size_t j = 0; j < r; ++j) dbrow[j] += av * grow[j];
        }
      }
    }
  };
  return make_node("matmul", {static_cast<int>(p), static_cast<int>(r)}, std::move(out), {a, b},
                   std::move(fn));
}

NodePtr linear(const NodePtr& x, const NodePtr& w, const NodePtr& b) {
  if (x->shape.size() != 2 || w->shape.size() != 2 || x->shape[1] != w->shape[1]) {
    fail_data("linear: incompatible shapes " + shape_str(x->shape) + " and " + shape_str(w->shape));
  }
  const std::size_t s = x->shape[0];
  const std::size_t q = x->shape[1];
  const std::size_t r = w->shape[0];
  if (b && (b->shape.size() != 1 || static_cast<std::size_t>(b->shape[0]) != r)) {
    fail_data("linear: bias shape " + shape_str(b->shape) + " does not match " +
              std::to_string(r) + " outputs");
  }
  std::vector<double> out(s * r);
  for (std::size_t i = 0; i < s; ++i) {
    const double* xrow = x->data.data() + i * q;
    double* orow = out.data() + i * r;
    for (std::size_t o = 0; o < r; ++o) {
      const double* wrow = w->data.data() + o * q;
      double acc = b ? b->data[o] : 0.0;
      for (std::size_t k = 0; k < q; ++k) acc += xrow[k] * wrow[k];
      orow[o] = acc;
    }
  }
  BackwardFn fn = [s, q, r](const Node& self, const double* adj, const std::vector<double*>& padj) {
    const Node& x = *self.parents[0];
    const Node& w = *self.parents[1];
    double* dx = padj[0];
    double* dw = padj[1];
    double* db = self.parents.size() > 2 ? padj[2] : nullptr;
    for (std::size_t i = 0; i < s; ++i) {
      const double* grow = adj + i * r;
      const double* xrow = x.data.data() + i * q;
      double* dxrow = dx ? dx + i * q : nullptr;
      for (std::size_t o = 0; o < r; ++o) {
        const double g = grow[o];
        if (g == 0.0) continue;
        if (dxrow) {
          const double* wrow = w.data.data() + o * q;
          for (std::size_t k = 0; k < q; ++k) dxrow[k] += g * wrow[k];
        }
        if (dw) {
          double* dwrow = dw + o * q;
          for (std::size_t k = 0; k < q; ++k) dwrow[k] += g * xrow[k];
        }
        if (db) db[o] += g;
      }
    }
  };
  std::vector<NodePtr> parents = {x, w};
  if (b) parents.push_back(b);
  return make_node("linear", {static_cast<int>(s), static_cast<int>(r)}, std::move(out),
                   std::move(parents), std::move(fn));
}

NodePtr softmax_rows(const NodePtr& x) {
  if (x->shape.size() != 2) {
    fail_data("softmax_rows: expected a matrix, got " + shape_str(x->shape));
  }
  const std::size_t rows = x->shape[0];
  const std::size_t cols = x->shape[1];
  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* xrow = x->data.data() + i * cols;
    double* orow = out.data() + i * cols;
    double mx = xrow[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, xrow[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      orow[j] = std::exp(xrow[j] - mx);
      sum += orow[j];
    }
    for (std::size_t j = 0; j < cols; ++j) orow[j] /= sum;
  }
  BackwardFn fn = [rows, cols](const Node& self, const double* adj, const std::vector<double*>& padj) {
    double* dx = padj[0];
    if (!dx) return;
    for (std::size_t i = 0; i < rows; ++i) {
      const double* yrow = self.data.data() + i * cols;
      const double* grow = adj + i * cols;
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += grow[j] * yrow[j];
      double* dxrow = dx + i * cols;
      for (std::size_t j = 0; j < cols; ++j) dxrow[j] += yrow[j] * (grow[j] - dot);
    }
  };
  return make_node("softmax_rows", x->shape, std::move(out), {x}, std::move(fn));
}

NodePtr window_mean(const NodePtr& x, int window, int dilation, int time_axis) {
  if (window < 1 || dilation < 1) {
    fail_usage("window_mean: window and dilation must be positive");
  }
  if (time_axis < 0 || time_axis >= static_cast<int>(x->shape.size())) {
    fail_usage("window_mean: time_axis " + std::to_string(time_axis) + " out of range for " +
               shape_str(x->shape));
  }
  const AxisSplit ax = split_at(x->shape, time_axis);
  const long t_len = static_cast<long>(ax.len);
  if (static_cast<long>(window - 1) * dilation >= t_len) {
    fail_data("window_mean: window spans " + std::to_string((window - 1) * dilation + 1) +
              " steps but the time axis has only " + std::to_string(t_len));
  }
  std::vector<double> out(x->size(), 0.0);
  const double* xd = x->data.data();
  for (std::size_t o = 0; o < ax.outer; ++o) {
    const std::size_t obase = o * ax.len * ax.inner;
    for (long t = 0; t < t_len; ++t) {
      const long cnt = std::min<long>(window, t / dilation + 1);
      double* orow = out.data() + obase + static_cast<std::size_t>(t) * ax.inner;
      for (long i = 0; i < cnt; ++i) {
        const double* xrow = xd + obase + static_cast<std::size_t>(t - i * dilation) * ax.inner;
        for (std::size_t c = 0; c < ax.inner; ++c) orow[c] += xrow[c];
      }
      const double dcnt = static_cast<double>(cnt);
      for (std::size_t c = 0; c < ax.inner; ++c) orow[c] /= dcnt;
    }
  }
  BackwardFn fn = [ax, t_len, window, dilation](const Node&, const double* adj,
                                                const std::vector<double*>& padj) {
    double* dx = padj[0];
    if (!dx) return;
    for (std::size_t o = 0; o < ax.outer; ++o) {
      const std::size_t obase = o * ax.len * ax.inner;
      for (long t = 0; t < t_len; ++t) {
        const long cnt = std::min<long>(window, t / dilation + 1);
        const double inv = 1.0 / static_cast<double>(cnt);
        const double* grow = adj + obase + static_cast<std::size_t>(t) * ax.inner;
        for (long i = 0; i < cnt; ++i) {
          double* dxrow = dx + obase + static_cast<std::size_t>(t - i * dilation) * ax.inner;
          for (std::size_t c = 0; c < ax.inner; ++c) dxrow[c] += grow[c] * inv;
        }
      }
    }
  };
  return make_node("window_mean", x->shape, std::move(out), {x}, std::move(fn));
}

NodePtr concat(const std::vector<NodePtr>& parts, int axis) {
  if (parts.empty()) fail_usage("concat: no inputs");
  const Shape& first = parts[0]->shape;
  if (axis < 0 || axis >= static_cast<int>(first.size())) {
    fail_usage("concat: axis " + std::to_string(axis) + " out of range for " + shape_str(first));
  }
  int axis_total = 0;
  for (const auto& p : parts) {
    if (p->shape.size() != first.size()) {
      fail_data("concat: rank mismatch between " + shape_str(first) + " and " + shape_str(p->shape));
    }
    for (int d = 0; d < static_cast<int>(first.size()); ++d) {
      if (d != axis && p->shape[d] != first[d]) {
        fail_data("concat: shapes " + shape_str(first) + " and " + shape_str(p->shape) +
                  " differ outside axis " + std::to_string(axis));
      }
    }
    axis_total += p->shape[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = axis_total;
  const AxisSplit ax = split_at(out_shape, axis);
  std::vector<double> out(numel(out_shape));
  for (std::size_t o = 0; o < ax.outer; ++o) {
    std::size_t run = 0;
    for (const auto& p : parts) {
      const std::size_t plen = static_cast<std::size_t>(p->shape[axis]) * ax.inner;
      const double* src = p->data.data() + o * plen;
      double* dst = out.data() + (o * ax.len + run) * ax.inner;
      std::copy(src, src + plen, dst);
      run += static_cast<std::size_t>(p->shape[axis]);
    }
  }
  std::vector<std::size_t> part_chunks;
  part_chunks.reserve(parts.size());
  for (const auto& p : parts) {
    part_chunks.push_back(static_cast<std::size_t>(p->shape[axis]) * ax.inner);
  }
  BackwardFn fn = [ax, part_chunks](const Node& self, const double* adj,
                                    const std::vector<double*>& padj) {
    for (std::size_t o = 0; o < ax.outer; ++o) {
      std::size_t run = o * ax.len * ax.inner;
      for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
        const std::size_t chunk = part_chunks[pi];
        if (double* dp = padj[pi]) {
          const double* src = adj + run;
          double* dst = dp + o * chunk;
          for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
        run += chunk;
      }
    }
  };
  return make_node("concat", std::move(out_shape), std::move(out), parts, std::move(fn));
}

NodePtr zero_mask(const NodePtr& x, const std::vector<double>& mask) {
  if (mask.size() != x->size()) {
    fail_usage("zero_mask: mask has " + std::to_string(mask.size()) + " entries, input " +
               std::to_string(x->size()));
  }
  std::vector<double> out(x->size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x->data[i] * mask[i];
  BackwardFn fn = [mask](const Node& self, const double* adj, const std::vector<double*>& padj) {
    double* dx = padj[0];
    if (!dx) return;
    for (std::size_t i = 0; i < self.size(); ++i) dx[i] += adj[i] * mask[i];
  };
  return make_node("zero_mask", x->shape, std::move(out), {x}, std::move(fn));
}

NodePtr reshape(const NodePtr& x, Shape shape) {
  if (numel(shape) != x->size()) {
    fail_usage("reshape: cannot view " + shape_str(x->shape) + " as " + shape_str(shape));
  }
  BackwardFn fn = [](const Node& self, const double* adj, const std::vector<double*>& padj) {
    double* dx = padj[0];
    if (!dx) return;
    for (std::size_t i = 0; i < self.size(); ++i) dx[i] += adj[i];
  };
  return make_node("reshape", std::move(shape), std::vector<double>(x->data), {x}, std::move(fn));
}

NodePtr shift_time(const NodePtr& x, int steps) {
  if (x->shape.size() != 3) fail_usage("shift_time: expected rank-3 input, got " + shape_str(x->shape));
  if (steps < 0) fail_usage("shift_time: negative shift");
  const std::size_t n = x->shape[0];
  const std::size_t t_len = x->shape[1];
  const std::size_t c = x->shape[2];
  std::vector<double> out(x->size(), 0.0);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t t = static_cast<std::size_t>(steps); t < t_len; ++t) {
      const double* src = x->data.data() + (b * t_len + (t - steps)) * c;
      double* dst = out.data() + (b * t_len + t) * c;
      std::copy(src, src + c, dst);
    }
  }
  BackwardFn fn = [n, t_len, c, steps](const Node&, const double* adj, const std::vector<double*>& padj) {
    double* dx = padj[0];
    if (!dx) return;
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t t = static_cast<std::size_t>(steps); t < t_len; ++t) {
        const double* src = adj + (b * t_len + t) * c;
        double* dst = dx + (b * t_len + (t - steps)) * c;
        for (std::size_t i = 0; i < c; ++i) dst[i] += src[i];
      }
    }
  };
  return make_node("shift_time", x->shape, std::move(out), {x}, std::move(fn));
}

NodePtr gather_time(const NodePtr& x, const std::vector<int>& indices) {
  if (x->shape.size() != 3) fail_usage("gather_time: expected rank-3 input, got " + shape_str(x->shape));
  const std::size_t n = x->shape[0];
  const std::size_t t_len = x->shape[1];
  const std::size_t c = x->shape[2];
  for (int idx : indices) {
    if (idx < 0 || idx >= static_cast<int>(t_len)) {
      fail_data("gather_time: index " + std::to_string(idx) + " outside time axis of length " +
                std::to_string(t_len));
    }
  }
  const std::size_t p = indices.size();
  std::vector<double> out(n * p * c);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < p; ++i) {
      const double* src = x->data.data() + (b * t_len + static_cast<std::size_t>(indices[i])) * c;
      std::copy(src, src + c, out.data() + (b * p + i) * c);
    }
  }
  BackwardFn fn = [n, t_len, c, indices](const Node&, const double* adj,
                                         const std::vector<double*>& padj) {
    double* dx = padj[0];
    if (!dx) return;
    const std::size_t p = indices.size();
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t i = 0; i < p; ++i) {
        const double* src = adj + (b * p + i) * c;
        double* dst = dx + (b * t_len + static_cast<std::size_t>(indices[i])) * c;
        for (std::size_t k = 0; k < c; ++k) dst[k] += src[k];
      }
    }
  };
  return make_node("gather_time",
                   {static_cast<int>(n), static_cast<int>(p), static_cast<int>(c)}, std::move(out),
                   {x}, std::move(fn));
}

NodePtr slice0(const NodePtr& x, int index) {
  if (x->shape.empty()) fail_usage("slice0: scalar input");
  const int k = x->shape[0];
  if (index < 0 || index >= k) {
    fail_usage("slice0: index " + std::to_string(index) + " outside leading axis of " +
               shape_str(x->shape));
  }
  Shape out_shape(x->shape.begin() + 1, x->shape.end());
  const std::size_t chunk = numel(out_shape);
  const std::size_t off = static_cast<std::size_t>(index) * chunk;
  std::vector<double> out(x->data.begin() + off, x->data.begin() + off + chunk);
  BackwardFn fn = [off, chunk](const Node&, const double* adj, const std::vector<double*>& padj) {
    double* dx = padj[0];
    if (!dx) return;
    for (std::size_t i = 0; i < chunk; ++i) dx[off + i] += adj[i];
  };
  return make_node("slice0", std::move(out_shape), std::move(out), {x}, std::move(fn));
}

NodePtr ar_apply(const NodePtr& hist, const NodePtr& w, const NodePtr& b) {
  if (hist->shape.size() != 3 || w->shape.size() != 4) {
    fail_data("ar_apply: expected history [n,lags,c] and weights [horizons,lags,c,c], got " +
              shape_str(hist->shape) + " and " + shape_str(w->shape));
  }
  const std::size_t n = hist->shape[0];
  const std::size_t lags = hist->shape[1];
  const std::size_t c = hist->shape[2];
  const std::size_t horizons = w->shape[0];
  if (static_cast<std::size_t>(w->shape[1]) != lags || static_cast<std::size_t>(w->shape[2]) != c ||
      static_cast<std::size_t>(w->shape[3]) != c) {
    fail_data("ar_apply: weights " + shape_str(w->shape) + " do not match history " +
              shape_str(hist->shape));
  }
  if (b && (b->shape.size() != 2 || static_cast<std::size_t>(b->shape[0]) != horizons ||
            static_cast<std::size_t>(b->shape[1]) != c)) {
    fail_data("ar_apply: bias shape " + shape_str(b->shape) + " does not match output");
  }
  std::vector<double> out(n * horizons * c, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t i = 0; i < horizons; ++i) {
      double* orow = out.data() + (v * horizons + i) * c;
      if (b) {
        const double* brow = b->data.data() + i * c;
        std::copy(brow, brow + c, orow);
      }
      for (std::size_t j = 0; j < lags; ++j) {
        const double* hrow = hist->data.data() + (v * lags + j) * c;
        const double* wmat = w->data.data() + ((i * lags + j) * c) * c;
        for (std::size_t o = 0; o < c; ++o) {
          const double* wrow = wmat + o * c;
          double acc = 0.0;
          for (std::size_t q = 0; q < c; ++q) acc += wrow[q] * hrow[q];
          orow[o] += acc;
        }
      }
    }
  }
  BackwardFn fn = [n, lags, c, horizons](const Node& self, const double* adj,
                                         const std::vector<double*>& padj) {
    const Node& hist = *self.parents[0];
    const Node& w = *self.parents[1];
    double* dh = padj[0];
    double* dw = padj[1];
    double* db = self.parents.size() > 2 ? padj[2] : nullptr;
    for (std::size_t v = 0; v < n; ++v) {
      for (std::size_t i = 0; i < horizons; ++i) {
        const double* grow = adj + (v * horizons + i) * c;
        if (db) {
          double* dbrow = db + i * c;
          for (std::size_t o = 0; o < c; ++o) dbrow[o] += grow[o];
        }
        for (std::size_t j = 0; j < lags; ++j) {
          const double* hrow = hist.data.data() + (v * lags + j) * c;
          const double* wmat = w.data.data() + ((i * lags + j) * c) * c;
          double* dhrow = dh ? dh + (v * lags + j) * c : nullptr;
          double* dwmat = dw ? dw + ((i * lags + j) * c) * c : nullptr;
          for (std::size_t o = 0; o < c; ++o) {
            const double g = grow[o];
            if (g == 0.0) continue;
            const double* wrow = wmat + o * c;
            if (dhrow) {
              for (std::size_t q = 0; q < c; ++q) dhrow[q] += g * wrow[q];
            }
            if (dwmat) {
              double* dwrow = dwmat + o * c;
              for (std::size_t q = 0; q < c; ++q) dwrow[q] += g * hrow[q];
            }
          }
        }
      }
    }
  };
  std::vector<NodePtr> parents = {hist, w};
  if (b) parents.push_back(b);
  return make_node("ar_apply",
                   {static_cast<int>(n), static_cast<int>(horizons), static_cast<int>(c)},
                   std::move(out), std::move(parents), std::move(fn));
}

NodePtr sum_all(const NodePtr& x) {
  double acc = 0.0;
  for (double v : x->data) acc += v;
  BackwardFn fn = [](const Node& self, const double* adj, const std::vector<double*>& padj) {
    double* dx = padj[0];
    if (!dx) return;
    const std::size_t n = self.parents[0]->size();
    for (std::size_t i = 0; i < n; ++i) dx[i] += adj[0];
  };
  return make_node("sum_all", {1}, {acc}, {x}, std::move(fn));
}

void backward(const NodePtr& root) {
  if (!root) fail_usage("backward: null root");
  if (root->size() != 1) {
    fail_usage("backward: root has shape " + shape_str(root->shape) + ", expected a scalar");
  }
  if (!root->requires_grad) {
    fail_usage("backward: root does not depend on any trainable value");
  }
  std::vector<Node*> topo;
  std::unordered_set<Node*> seen;
  struct Frame {
    Node* node;
    std::size_t next;
  };
  std::vector<Frame> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.node->parents.size()) {
      Node* p = f.node->parents[f.next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      topo.push_back(f.node);
      stack.pop_back();
    }
  }
  std::unordered_map<Node*, std::vector<double>> adjoint;
  adjoint.reserve(topo.size());
  adjoint[root.get()] = {1.0};
  std::vector<double*> padj;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node* node = *it;
    if (!node->backward_fn) continue;
    auto self_it = adjoint.find(node);
    if (self_it == adjoint.end()) continue;
    padj.assign(node->parents.size(), nullptr);
    for (std::size_t i = 0; i < node->parents.size(); ++i) {
      Node* p = node->parents[i].get();
      if (!p->requires_grad) continue;
      auto [pit, inserted] = adjoint.try_emplace(p);
      if (inserted) pit->second.assign(p->size(), 0.0);
      padj[i] = pit->second.data();
    }
    node->backward_fn(*node, self_it->second.data(), padj);
  }
  for (Node* node : topo) {
    auto it = adjoint.find(node);
    if (it == adjoint.end()) continue;
    if (node->grad.empty()) node->grad.assign(node->size(), 0.0);
    for (std::size_t i = 0; i < node->size(); ++i) node->grad[i] += it->second[i];
  }
}

void zero_grad(std::vector<Parameter>& params) {
  for (auto& p : params) {
    if (!p.node->grad.empty()) std::fill(p.node->grad.begin(), p.node->grad.end(), 0.0);
  }
}

void adam_step(std::vector<Parameter>& params, double lr, double beta1, double beta2, double eps) {
  for (auto& p : params) {
    const std::size_t n = p.node->size();
    if (p.m.empty()) {
      p.m.assign(n, 0.0);
      p.v.assign(n, 0.0);
    }
    p.steps += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(p.steps));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(p.steps));
    const bool has_grad = !p.node->grad.empty();
    for (std::size_t i = 0; i < n; ++i) {
      const double g = has_grad ? p.node->grad[i] : 0.0;
      p.m[i] = beta1 * p.m[i] + (1.0 - beta1) * g;
      p.v[i] = beta2 * p.v[i] + (1.0 - beta2) * g * g;
      const double mhat = p.m[i] / bc1;
      const double vhat = p.v[i] / bc2;
      p.node->data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

}  // namespace scnn
