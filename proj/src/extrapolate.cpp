#include "extrapolate.hpp"

#include <cmath>

namespace scnn {

namespace {

void check_stream(const char* op, const NodePtr& x, const ExtrapConfig& cfg) {
  if (x->shape.size() != 3 || x->shape[2] != cfg.channels) {
    fail_data(std::string(op) + ": expected [n,t," + std::to_string(cfg.channels) + "], got " +
              shape_str(x->shape));
  }
}

}  // namespace

void ExtrapConfig::validate() const {
  if (horizons < 1) fail_usage("extrapolate: horizons must be positive");
  if (ar_lags < 1) fail_usage("extrapolate: ar_lags must be positive");
  if (cycle_length < 1) fail_usage("extrapolate: cycle_length must be positive");
  if (channels < 1) fail_usage("extrapolate: channels must be positive");
}

RegularExtrap extrapolate_regular(const ComponentSet& components, int t, const ExtrapConfig& cfg) {
  cfg.validate();
  check_stream("extrapolate_regular", components.mu_lt, cfg);
  const int t_len = components.mu_lt->shape[1];
  if (t < 0 || t >= t_len) {
    fail_data("extrapolate_regular: window end " + std::to_string(t) +
              " outside series of length " + std::to_string(t_len));
  }
  const std::vector<int> hold(static_cast<std::size_t>(cfg.horizons), t);
  std::vector<int> phase(static_cast<std::size_t>(cfg.horizons));
  const int m = cfg.cycle_length;
  for (int i = 1; i <= cfg.horizons; ++i) {
    // Latest past position at the same phase as t+i: back up whole cycles.
    const int cycles = (i + m - 1) / m;
    const int idx = t - m * cycles + i;
    if (idx < 0) {
      fail_data("extrapolate_regular: horizon " + std::to_string(i) +
                " needs seasonal history at index " + std::to_string(idx) +
                "; the window is too short for cycle_length " + std::to_string(m));
    }
    phase[static_cast<std::size_t>(i - 1)] = idx;
  }
  RegularExtrap out;
  out.mu_lt = gather_time(components.mu_lt, hold);
  out.sigma_lt = gather_time(components.sigma_lt, hold);
  out.mu_se = gather_time(components.mu_se, phase);
  out.sigma_se = gather_time(components.sigma_se, phase);
  return out;
}

NodePtr ar_history(const NodePtr& stream, int t, int ar_lags) {
  if (stream->shape.size() != 3) {
    fail_data("ar_history: expected rank-3 stream, got " + shape_str(stream->shape));
  }
  const int t_len = stream->shape[1];
  if (t < 0 || t >= t_len) {
    fail_data("ar_history: window end " + std::to_string(t) + " outside series of length " +
              std::to_string(t_len));
  }
  if (t - ar_lags + 1 < 0) {
    fail_data("ar_history: " + std::to_string(ar_lags) + " lags need history back to index " +
              std::to_string(t - ar_lags + 1));
  }
  std::vector<int> idx(static_cast<std::size_t>(ar_lags));
  for (int j = 0; j < ar_lags; ++j) idx[static_cast<std::size_t>(j)] = t - j;
  return gather_time(stream, idx);
}

NodePtr extrapolate_ar(const NodePtr& history, const ARExtrapolator& ar, int horizon) {
  const int horizons = ar.w->shape[0];
  if (horizon < 1 || horizon > horizons) {
    fail_usage("extrapolate_ar: horizon " + std::to_string(horizon) + " outside [1," +
               std::to_string(horizons) + "]");
  }
  const NodePtr all = ar_apply(history, ar.w, ar.b);
  const NodePtr one = gather_time(all, {horizon - 1});
  return reshape(one, {all->shape[0], all->shape[2]});
}

NodePtr gate_apply(const NodePtr& z_hat, const NodePtr& h_hat, const InteractionGate& gate) {
  if (z_hat->shape.size() != 2 || h_hat->shape.size() != 2 ||
      z_hat->shape[0] != h_hat->shape[0]) {
    fail_data("gate_apply: expected matching [s,4c] and [s,8c], got " + shape_str(z_hat->shape) +
              " and " + shape_str(h_hat->shape));
  }
  const int width = gate.w1->shape[1];
  if (z_hat->shape[1] + h_hat->shape[1] != width) {
    fail_data("gate_apply: combined width " +
              std::to_string(z_hat->shape[1] + h_hat->shape[1]) + " does not match gate width " +
              std::to_string(width));
  }
  const NodePtr zh = concat({z_hat, h_hat}, 1);
  const NodePtr left = linear(zh, gate.w1, gate.b1);
  const NodePtr right = linear(zh, gate.w2, gate.b2);
  return mul(left, right);
}

ExtrapOut extrapolate_all(const ComponentSet& components, const ResidualStack& residuals, int t,
                          const ExtrapParams& params, const ExtrapConfig& cfg) {
  cfg.validate();
  const int n = components.mu_lt->shape[0];
  const int c = cfg.channels;
  const int horizons = cfg.horizons;

  const RegularExtrap reg = extrapolate_regular(components, t, cfg);
  auto learned = [&](const NodePtr& stream, const ARExtrapolator& ar) {
    return ar_apply(ar_history(stream, t, cfg.ar_lags), ar.w, ar.b);
  };
  const NodePtr z_hat = concat({learned(residuals.z1, params.z1), learned(residuals.z2, params.z2),
                                learned(residuals.z3, params.z3), learned(residuals.z4, params.z4)},
                               2);
  const NodePtr h_hat =
      concat({reg.mu_lt, reg.sigma_lt, reg.mu_se, reg.sigma_se,
              learned(components.mu_st, params.mu_st), learned(components.sigma_st, params.sigma_st),
              learned(components.mu_ce, params.mu_ce), learned(components.sigma_ce, params.sigma_ce)},
             2);

  const NodePtr s_flat = gate_apply(reshape(z_hat, {n * horizons, 4 * c}),
                                    reshape(h_hat, {n * horizons, 8 * c}), params.gate);
  ExtrapOut out;
  out.s_hat = reshape(s_flat, {n, horizons, c});
  out.h_hat = h_hat;
  out.z_hat = z_hat;
  return out;
}

std::vector<double> contribution_matrix(const ARExtrapolator& ar) {
  const int horizons = ar.w->shape[0];
  const int lags = ar.w->shape[1];
  const std::size_t block = static_cast<std::size_t>(ar.w->shape[2]) * ar.w->shape[3];
  std::vector<double> out(static_cast<std::size_t>(horizons) * lags);
  for (int i = 0; i < horizons; ++i) {
    for (int j = 0; j < lags; ++j) {
      const double* w = ar.w->data.data() + (static_cast<std::size_t>(i) * lags + j) * block;
      double acc = 0.0;
      for (std::size_t q = 0; q < block; ++q) acc += w[q] * w[q];
      out[static_cast<std::size_t>(i) * lags + j] = std::sqrt(acc);
    }
  }
  return out;
}

}  // namespace scnn
