#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "data.hpp"
#include "network.hpp"

namespace scnn {

struct TrainConfig {
  int batch_size = 8;
  double lr = 1e-4;
  int max_epochs = 50;
  int patience = 10;
  std::uint64_t seed = 7;
  double val_frac = 0.15;
  double test_frac = 0.15;

  void validate() const;
};

// A window is identified by its origin t: inputs cover [t-t_in+1, t] and
// targets cover [t+1, t+t_out].
std::vector<long long> make_windows(long long t_steps, int t_in, int t_out);

struct WindowSplit {
  std::vector<long long> train;
  std::vector<long long> val;
  std::vector<long long> test;
  long long train_end = 0;  // training region is [0, train_end)
  long long val_end = 0;    // validation region is [train_end, val_end)
};

// Chronological split. Training windows lie entirely inside the training
// region; later splits only require their targets inside the region, so
// their inputs may reach back across the boundary.
WindowSplit split_windows(long long t_steps, int t_in, int t_out, double val_frac,
                          double test_frac);

struct FitResult {
  std::vector<double> train_curve;  // mean total loss per epoch
  std::vector<double> val_curve;    // mean main loss per epoch
  int best_epoch = 0;
  double best_val = 0.0;
  WindowSplit split;
};

// Standardizes a copy of the data on the training region, stores the scaler
// in the model, and runs mini-batch Adam with early stopping on validation
// main loss. The best-validation parameters are restored before returning.
FitResult fit(Model& model, const SeriesBatch& data, const TrainConfig& cfg);

void write_loss_curve(const FitResult& fit, std::ostream& out);

struct HorizonMetrics {
  double mae = 0.0;
  double rmse = 0.0;
  double mape_pct = 0.0;
  long long n = 0;  // points entering mae/rmse; mape keeps its own count
};

struct EvalReport {
  std::vector<HorizonMetrics> horizons;  // index 0 = horizon 1
  HorizonMetrics aggregate;
  long long n_windows = 0;
  double wall_ms_per_window = 0.0;  // reported on request, never serialized
};

// Metrics in original units over the given window origins. Masked target
// cells are skipped; mape additionally skips targets with |y| < 1e-3.
EvalReport evaluate(const Model& model, const SeriesBatch& raw,
                    const std::vector<long long>& origins);

// `horizon,mae,rmse,mape_pct,n` rows; the aggregate appears as horizon 0.
void write_eval_csv(const EvalReport& report, std::ostream& out);

enum class Baseline { Persistence, SeasonalPersistence, HistoricalMean };

Baseline baseline_from_string(const std::string& s);

// window: [n_vars * t_in] variable-major, original units; out: [n_vars * t_out].
void baseline_forecast(Baseline kind, const double* window, int n_vars, int t_in, int t_out,
                       int cycle_length, double* out);

EvalReport evaluate_baseline(Baseline kind, const SeriesBatch& raw,
                             const std::vector<long long>& origins, int t_in, int t_out,
                             int cycle_length);

}  // namespace scnn
