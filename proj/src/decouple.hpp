#pragma once

#include "tape.hpp"

namespace scnn {

// Window geometry and sizing for one decoupling block. Windows are trailing
// (strictly causal); the seasonal window is dilated by the cycle length so its
// taps land on the same phase of previous cycles.
struct DecoupleConfig {
  int n_vars = 0;
  int channels = 0;
  int long_term_window = 0;   // steps, dilation 1
  int cycle_length = 1;       // seasonal dilation, steps per cycle
  int season_window = 1;      // seasonal taps, one per past cycle
  int short_term_window = 8;  // steps, dilation 1
  double variance_floor = 1.0;
  // Unit-test escape hatch for scale/shift invariance checks; training always
  // keeps the floor positive so residuals stay bounded.
  bool allow_zero_floor = false;

  void validate(int t_len) const;
};

// mu/sigma are the extracted location/scale traces, residual the normalized
// remainder; all [n_vars, t, channels].
struct LayerStats {
  NodePtr mu;
  NodePtr sigma;
  NodePtr residual;
};

struct ComponentSet {
  NodePtr mu_lt, sigma_lt;
  NodePtr mu_se, sigma_se;
  NodePtr mu_st, sigma_st;
  NodePtr mu_ce, sigma_ce;
};

// Layered residuals; z4 is the final white remainder after all four stages.
struct ResidualStack {
  NodePtr z1, z2, z3, z4;
};

LayerStats longterm_layer(const NodePtr& z0, const DecoupleConfig& cfg);
LayerStats seasonal_layer(const NodePtr& z1, const DecoupleConfig& cfg);
LayerStats shortterm_layer(const NodePtr& z2, const DecoupleConfig& cfg);
// attn_logits: [n_vars, n_vars] unnormalized; rows are softmaxed into the
// mixing weights over source variables.
LayerStats coevolving_layer(const NodePtr& z3, const NodePtr& attn_logits,
                            const DecoupleConfig& cfg);

struct DecoupleOut {
  ComponentSet components;
  ResidualStack residuals;
  NodePtr h;  // [n, t, 8*channels]: mu/sigma pairs in stage order
  NodePtr z;  // [n, t, 4*channels]: z1..z4
};

// Runs the four stages in order and concatenates the component/residual
// channel groups.
DecoupleOut decouple_block(const NodePtr& z0, const NodePtr& attn_logits,
                           const DecoupleConfig& cfg);

}  // namespace scnn
