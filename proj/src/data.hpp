#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "error.hpp"

namespace scnn {

// Dense multivariate series, variable-major layout (values[n * t_steps + t]).
// Values are always fully imputed after ingestion; `observed` marks which
// cells held real measurements so metrics can skip the imputed ones.
struct SeriesBatch {
  int n_vars = 0;
  long long t_steps = 0;
  long long t0 = 0;
  std::vector<std::string> var_names;
  std::vector<double> values;
  std::vector<std::uint8_t> observed;
  std::optional<int> cycle_hint;

  double at(int var, long long t) const { return values[static_cast<std::size_t>(var) * t_steps + t]; }
  bool is_observed(int var, long long t) const {
    return observed[static_cast<std::size_t>(var) * t_steps + t] != 0;
  }
  const double* row(int var) const { return values.data() + static_cast<std::size_t>(var) * t_steps; }

  // Rewrites every masked cell: last observation carried forward, the first
  // observation carried backward over a masked head, zero when a variable has
  // no observations at all.
  void impute_missing();
};

// Per-variable affine normalization fitted on the training span only.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> std;

  static Standardizer fit(const SeriesBatch& batch, long long t_end);
  void transform(SeriesBatch& batch) const;
  void inverse(SeriesBatch& batch) const;
};

SeriesBatch load_csv(const std::string& path);
void save_csv(const SeriesBatch& batch, const std::string& path);

// Settings of the layered synthetic generator. Each variable composes
// long-term drift, a fixed per-phase seasonal profile, decaying local shocks,
// group-shared shocks, and white noise, each with its own slowly varying
// scale factor; the factor traces are returned as ground truth.
struct SynthSpec {
  int n_vars = 16;
  long long t_steps = 4000;
  int cycle_length = 24;
  std::uint64_t seed = 7;

  double base_level = 5.0;
  double lt_amp = 1.0;
  double lt_timescale = 200.0;
  double lt_sigma_scale = 0.2;
  // Linear mean ramp of lt_ramp * base_level applied from
  // t = lt_ramp_begin_frac * t_steps to the end; adds no random draws, so a
  // ramped and a clean dataset from one seed share every other factor.
  double lt_ramp = 0.0;
  double lt_ramp_begin_frac = 0.7;

  double se_amp = 1.0;
  double se_sigma_scale = 0.1;

  double st_shock_rate = 0.02;
  double st_shock_mag = 1.5;
  int st_shock_duration = 6;
  double st_sigma_scale = 0.1;

  int ce_groups = 4;
  double ce_shock_rate = 0.01;
  double ce_shock_mag = 1.0;
  int ce_shock_duration = 4;
  double ce_sigma_scale = 0.1;

  double residual_std = 1.0;

  void validate() const;
};

// Factor traces per (variable, time), same layout as SeriesBatch.values.
struct GroundTruth {
  std::vector<double> mu_lt, sigma_lt;
  std::vector<double> mu_se, sigma_se;
  std::vector<double> mu_st, sigma_st;
  std::vector<double> mu_ce, sigma_ce;
  std::vector<double> residual;
};

struct Generated {
  SeriesBatch series;
  GroundTruth truth;
};

Generated generate(const SynthSpec& spec);

// Writes <basename>.<lt|se|st|ce>.<mu|sigma>.csv into dir (8 files).
void save_truth_csvs(const Generated& gen, const std::string& dir, const std::string& basename);

SeriesBatch corrupt_gaussian(const SeriesBatch& batch, double sigma, std::uint64_t seed);
SeriesBatch corrupt_missing(const SeriesBatch& batch, double rate, std::uint64_t seed);

struct CycleDetection {
  int period = 0;
  double peak = 0.0;  // mean autocorrelation at the chosen lag; < 0.2 is weak
};

// Argmax of mean autocorrelation over lags [2, max_period]; ties go to the
// smaller lag. Requires t_steps >= 2 * max_period.
CycleDetection detect_cycle(const SeriesBatch& batch, int max_period);

}  // namespace scnn
