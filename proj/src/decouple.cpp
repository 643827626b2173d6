#include "decouple.hpp"

namespace scnn {

namespace {

void check_series(const char* layer, const NodePtr& x, const DecoupleConfig& cfg) {
  if (x->shape.size() != 3 || x->shape[0] != cfg.n_vars || x->shape[2] != cfg.channels) {
    fail_data(std::string(layer) + ": expected [" + std::to_string(cfg.n_vars) + ",t," +
              std::to_string(cfg.channels) + "], got " + shape_str(x->shape));
  }
}

// mu = windowed mean, sigma = sqrt(windowed mean of squares - mu^2 + floor)
// with the centered second moment clamped at 0 first (cancellation can leave
// it at -1e-17), residual = (x - mu) / sigma.
LayerStats windowed_stats(const NodePtr& x, int window, int dilation, double floor) {
  LayerStats out;
  out.mu = window_mean(x, window, dilation, 1);
  const NodePtr m2 = window_mean(square(x), window, dilation, 1);
  out.sigma = sqrt(add_scalar(relu(sub(m2, square(out.mu))), floor));
  out.residual = div(sub(x, out.mu), out.sigma);
  return out;
}

}  // namespace

void DecoupleConfig::validate(int t_len) const {
  if (n_vars < 1) fail_usage("decouple: n_vars must be positive");
  if (channels < 1) fail_usage("decouple: channels must be positive");
  if (cycle_length < 1) fail_usage("decouple: cycle_length must be positive");
  if (season_window < 1) fail_usage("decouple: season_window must be positive");
  if (short_term_window < 1) fail_usage("decouple: short_term_window must be positive");
  if (long_term_window < cycle_length * season_window) {
    fail_usage("decouple: long_term_window " + std::to_string(long_term_window) +
               " is shorter than season_window * cycle_length = " +
               std::to_string(cycle_length * season_window));
  }
  if (variance_floor < 0.0 || (variance_floor == 0.0 && !allow_zero_floor)) {
    fail_usage("decouple: variance_floor must be positive");
  }
  if (cycle_length >= t_len) {
    fail_data("decouple: cycle_length " + std::to_string(cycle_length) +
              " does not fit a series of " + std::to_string(t_len) + " steps");
  }
  if (long_term_window > t_len) {
    fail_data("decouple: long_term_window " + std::to_string(long_term_window) +
              " exceeds series length " + std::to_string(t_len));
  }
}

LayerStats longterm_layer(const NodePtr& z0, const DecoupleConfig& cfg) {
  check_series("longterm_layer", z0, cfg);
  return windowed_stats(z0, cfg.long_term_window, 1, cfg.variance_floor);
}

LayerStats seasonal_layer(const NodePtr& z1, const DecoupleConfig& cfg) {
  check_series("seasonal_layer", z1, cfg);
  return windowed_stats(z1, cfg.season_window, cfg.cycle_length, cfg.variance_floor);
}

LayerStats shortterm_layer(const NodePtr& z2, const DecoupleConfig& cfg) {
  check_series("shortterm_layer", z2, cfg);
  return windowed_stats(z2, cfg.short_term_window, 1, cfg.variance_floor);
}

LayerStats coevolving_layer(const NodePtr& z3, const NodePtr& attn_logits,
                            const DecoupleConfig& cfg) {
  check_series("coevolving_layer", z3, cfg);
  if (attn_logits->shape.size() != 2 || attn_logits->shape[0] != cfg.n_vars ||
      attn_logits->shape[1] != cfg.n_vars) {
    fail_data("coevolving_layer: attention logits must be [" + std::to_string(cfg.n_vars) + "," +
              std::to_string(cfg.n_vars) + "], got " + shape_str(attn_logits->shape));
  }
  const int n = cfg.n_vars;
  const int t_len = z3->shape[1];
  const int c = cfg.channels;
  const Shape flat{n, t_len * c};
  const Shape full{n, t_len, c};
  const NodePtr a = softmax_rows(attn_logits);
  LayerStats out;
  out.mu = reshape(matmul(a, reshape(z3, flat)), full);
  const NodePtr m2 = reshape(matmul(a, reshape(square(z3), flat)), full);
  out.sigma = sqrt(add_scalar(relu(sub(m2, square(out.mu))), cfg.variance_floor));
  out.residual = div(sub(z3, out.mu), out.sigma);
  return out;
}

DecoupleOut decouple_block(const NodePtr& z0, const NodePtr& attn_logits,
                           const DecoupleConfig& cfg) {
  if (z0->shape.size() != 3) {
    fail_data("decouple_block: expected rank-3 input, got " + shape_str(z0->shape));
  }
  cfg.validate(z0->shape[1]);
  const LayerStats lt = longterm_layer(z0, cfg);
  const LayerStats se = seasonal_layer(lt.residual, cfg);
  const LayerStats st = shortterm_layer(se.residual, cfg);
  const LayerStats ce = coevolving_layer(st.residual, attn_logits, cfg);
  DecoupleOut out;
  out.components = {lt.mu, lt.sigma, se.mu, se.sigma, st.mu, st.sigma, ce.mu, ce.sigma};
  out.residuals = {lt.residual, se.residual, st.residual, ce.residual};
  out.h = concat({lt.mu, lt.sigma, se.mu, se.sigma, st.mu, st.sigma, ce.mu, ce.sigma}, 2);
  out.z = concat({lt.residual, se.residual, st.residual, ce.residual}, 2);
  return out;
}

}  // namespace scnn
