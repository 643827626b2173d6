#pragma once

#include "decouple.hpp"
#include "tape.hpp"

namespace scnn {

struct ExtrapConfig {
  int horizons = 1;      // forecast steps past the window end
  int ar_lags = 8;       // lookback of the learned stream extrapolators
  int cycle_length = 1;  // phase arithmetic for the seasonal lookup
  int channels = 0;

  void validate() const;
};

// One learned per-stream extrapolator: w[horizons, lags, channels, channels]
// maps the lag-j value to the horizon-i prediction, b[horizons, channels] is
// the per-horizon offset (null when bias is disabled).
struct ARExtrapolator {
  NodePtr w;
  NodePtr b;
};

// Bilinear combiner of extrapolated residuals and components. w1/w2 are
// [channels, 12*channels]; b1/b2 are [channels] or null.
struct InteractionGate {
  NodePtr w1, w2;
  NodePtr b1, b2;
};

// Independent extrapolators for the four residual streams plus the
// short-term and co-evolving statistic streams. Long-term and seasonal
// statistics extrapolate without parameters.
struct ExtrapParams {
  ARExtrapolator z1, z2, z3, z4;
  ARExtrapolator mu_st, sigma_st;
  ARExtrapolator mu_ce, sigma_ce;
  InteractionGate gate;
};

// Each field [n, horizons, channels]: long-term statistics replicated from
// time t, seasonal statistics copied from the matching phase of the latest
// completed cycles.
struct RegularExtrap {
  NodePtr mu_lt, sigma_lt;
  NodePtr mu_se, sigma_se;
};

RegularExtrap extrapolate_regular(const ComponentSet& components, int t, const ExtrapConfig& cfg);

// Gathers the ar_lags most recent values of a [n, t_len, channels] stream
// ending at time t, most recent first -> [n, ar_lags, channels].
NodePtr ar_history(const NodePtr& stream, int t, int ar_lags);

// Prediction for one horizon (1-based): sum_j w[i-1,j] * history[:,j,:] + b.
NodePtr extrapolate_ar(const NodePtr& history, const ARExtrapolator& ar, int horizon);

// z_hat [s, 4*channels], h_hat [s, 8*channels] -> [s, channels].
NodePtr gate_apply(const NodePtr& z_hat, const NodePtr& h_hat, const InteractionGate& gate);

struct ExtrapOut {
  NodePtr s_hat;  // [n, horizons, channels]
  NodePtr h_hat;  // [n, horizons, 8*channels], same ordering as the block's h
  NodePtr z_hat;  // [n, horizons, 4*channels]
};

// Assembles h_hat/z_hat from the final block's components and residuals at
// window end t, then applies the gate per horizon.
ExtrapOut extrapolate_all(const ComponentSet& components, const ResidualStack& residuals, int t,
                          const ExtrapParams& params, const ExtrapConfig& cfg);

// Entry (i,j) = Frobenius norm of w[i,j,:,:]; row-major [horizons x lags].
std::vector<double> contribution_matrix(const ARExtrapolator& ar);

}  // namespace scnn
