#pragma once

#include <cstdint>
#include <vector>

#include "network.hpp"

namespace scnn {

// One exponential-moving-average step: lambda keeps the old mass.
double ema_update(double acc, double x, double lambda);

// Bias-corrected read of an accumulator that started at zero. Before any
// update (steps == 0) the estimate is zero by convention.
double ema_read(double acc, double lambda, long long steps);

// Online forecaster over a frozen model. Exact mode keeps the trailing
// input window and replays the offline forward per push; EMA mode keeps
// constant-size component accumulators and never touches raw history.
class StreamState {
 public:
  void init(const Model* model, bool ema);
  bool initialized() const { return model_ != nullptr; }
  bool ema_mode() const { return ema_; }
  long long steps() const { return steps_; }

  // y_raw: one observation per variable, original units. Returns the full
  // forecast in original units; origin_t counts pushes from zero.
  ForecastDistribution push(const double* y_raw);

 private:
  struct PhaseAccum {
    std::vector<double> m1;  // [n_vars * channels]
    std::vector<double> m2;
    long long count = 0;
  };

  // Ring of fixed-size rows, newest at the front of read order.
  struct RowRing {
    std::vector<std::vector<double>> rows;
    std::size_t head = 0;
    std::size_t filled = 0;

    void reset(std::size_t capacity, std::size_t width);
    void push(const std::vector<double>& row);
    // Row at lag j (0 = newest); lags past the fill clamp to the oldest.
    const std::vector<double>& at(std::size_t lag) const;
  };

  struct BlockState {
    std::vector<double> attn;   // cached softmax rows [n_vars * n_vars]
    std::vector<double> lt_m1, lt_m2;
    std::vector<PhaseAccum> se;
    std::vector<double> st_m1, st_m2;
    RowRing fuse_taps;          // [Z,H] rows of width n_vars * 12 * channels
  };

  ForecastDistribution push_exact(const double* y_raw);
  ForecastDistribution push_ema(const double* y_raw);

  const Model* model_ = nullptr;
  bool ema_ = false;
  long long steps_ = 0;

  // Exact mode: trailing raw observations, one row per push.
  RowRing hist_;

  // EMA mode.
  double lambda_lt_ = 0.0, lambda_se_ = 0.0, lambda_st_ = 0.0;
  std::vector<BlockState> blocks_;
  RowRing ar_z1_, ar_z2_, ar_z3_, ar_z4_;
  RowRing ar_mu_st_, ar_sigma_st_, ar_mu_ce_, ar_sigma_ce_;
  std::vector<double> scratch_window_;
};

}  // namespace scnn
