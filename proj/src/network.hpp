#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "decouple.hpp"
#include "extrapolate.hpp"
#include "fuse.hpp"

namespace scnn {

enum class LossMode { Mle, Mse };

LossMode loss_mode_from_string(const std::string& s);
std::string to_string(LossMode mode);

struct ModelConfig {
  int n_vars = 0;
  int input_steps = 0;
  int horizons = 1;
  int channels = 8;
  int blocks = 4;
  int kernel = 2;
  int long_term_window = 0;  // 0: resolves to input_steps
  int cycle_length = 24;
  int season_window = 0;     // 0: resolves to long_term_window / cycle_length
  int short_term_window = 8; // also the lookback of the learned extrapolators
  double variance_floor = 1.0;
  double aux_weight = 0.5;
  bool gate_bias = true;
  bool per_var_embed = false;
  LossMode loss_mode = LossMode::Mle;
  LossMode aux_loss_mode = LossMode::Mle;

  int resolved_long_window() const { return long_term_window > 0 ? long_term_window : input_steps; }
  int resolved_season_window() const;
  DecoupleConfig decouple_config() const;
  ExtrapConfig extrap_config() const;
  void validate() const;
};

// Graph-side forecast: mean and pre-extracted positive scale, each [n, horizons].
struct DistNodes {
  NodePtr mean;
  NodePtr std;
};

// Inference-side forecast in original units.
struct ForecastDistribution {
  int n_vars = 0;
  int horizons = 0;
  long long origin_t = 0;
  std::vector<double> mean;  // [n_vars * horizons], variable-major
  std::vector<double> std;
};

NodePtr mle_loss(const std::vector<double>& truth, const DistNodes& f);
NodePtr mse_loss(const std::vector<double>& truth, const DistNodes& f);
// mle mode: aux_weight * loss(aux) + loss(main); mse mode: squared error on
// the main mean alone. Reductions sum over variables and horizons; batch
// averaging is the caller's job.
NodePtr total_loss(const std::vector<double>& truth, const DistNodes& main, const DistNodes& aux,
                   double aux_weight, LossMode mode, LossMode aux_mode);

class Model {
 public:
  Model(ModelConfig cfg, std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }
  long long count_parameters() const;

  struct GraphOut {
    StackOut stack;
    ExtrapOut extrap;
    DistNodes main;
    DistNodes aux;  // empty nodes unless built with with_aux
  };

  // window: standardized values, [n_vars * input_steps] variable-major.
  // Builds the full graph; records gradients when grad mode is on.
  GraphOut build_forward(const double* window, bool with_aux) const;

  // Raw-unit window in, raw-unit forecast out; runs without recording.
  ForecastDistribution forecast(const double* raw_window, long long origin_t) const;

  // Embedding + stacked blocks over a standardized series of any valid
  // length, for component inspection.
  StackOut run_stack(const double* std_series, int t_len) const;

  const ExtrapParams& extrap_params() const { return extrap_; }
  const std::vector<BlockParams>& block_params() const { return blocks_; }

  void save(const std::string& path) const;
  static Model load(const std::string& path);

  // Per-variable standardization owned by the checkpoint; empty = identity.
  std::vector<double> norm_mean;
  std::vector<double> norm_std;

  void standardize(const double* raw, double* out, std::size_t count) const;

 private:
  NodePtr add_param(const std::string& name, Shape shape, std::vector<double> data);
  NodePtr embed(const NodePtr& y) const;
  DistNodes heads(const NodePtr& s_hat) const;

  ModelConfig cfg_;
  std::vector<Parameter> params_;
  NodePtr embed_w_, embed_b_;
  std::vector<BlockParams> blocks_;
  ExtrapParams extrap_;
  NodePtr head_mean_w_, head_mean_b_, head_std_w_, head_std_b_;
};

}  // namespace scnn
