#include "data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "rng.hpp"

namespace scnn {

void SeriesBatch::impute_missing() {
  for (int v = 0; v < n_vars; ++v) {
    double* row = values.data() + static_cast<std::size_t>(v) * t_steps;
    const std::uint8_t* seen = observed.data() + static_cast<std::size_t>(v) * t_steps;
    long long first_seen = -1;
    double last = 0.0;
    for (long long t = 0; t < t_steps; ++t) {
      if (seen[t]) {
        last = row[t];
        if (first_seen < 0) first_seen = t;
      } else if (first_seen >= 0) {
        row[t] = last;
      }
    }
    if (first_seen > 0) {
      const double head = row[first_seen];
      for (long long t = 0; t < first_seen; ++t) row[t] = head;
    } else if (first_seen < 0) {
      for (long long t = 0; t < t_steps; ++t) row[t] = 0.0;
    }
  }
}

Standardizer Standardizer::fit(const SeriesBatch& batch, long long t_end) {
  if (t_end < 1 || t_end > batch.t_steps) {
    fail_usage("standardizer: fit span " + std::to_string(t_end) + " outside series of " +
               std::to_string(batch.t_steps) + " steps");
  }
  Standardizer s;
  s.mean.resize(static_cast<std::size_t>(batch.n_vars));
  s.std.resize(static_cast<std::size_t>(batch.n_vars));
  for (int v = 0; v < batch.n_vars; ++v) {
    const double* row = batch.row(v);
    double sum = 0.0;
    for (long long t = 0; t < t_end; ++t) sum += row[t];
    const double mean = sum / static_cast<double>(t_end);
    double sq = 0.0;
    for (long long t = 0; t < t_end; ++t) sq += (row[t] - mean) * (row[t] - mean);
    s.mean[static_cast<std::size_t>(v)] = mean;
    s.std[static_cast<std::size_t>(v)] =
        std::max(std::sqrt(sq / static_cast<double>(t_end)), 1e-8);
  }
  return s;
}

void Standardizer::transform(SeriesBatch& batch) const {
  for (int v = 0; v < batch.n_vars; ++v) {
    double* row = batch.values.data() + static_cast<std::size_t>(v) * batch.t_steps;
    const double m = mean[static_cast<std::size_t>(v)];
    const double s = std[static_cast<std::size_t>(v)];
    for (long long t = 0; t < batch.t_steps; ++t) row[t] = (row[t] - m) / s;
  }
}

void Standardizer::inverse(SeriesBatch& batch) const {
  for (int v = 0; v < batch.n_vars; ++v) {
    double* row = batch.values.data() + static_cast<std::size_t>(v) * batch.t_steps;
    const double m = mean[static_cast<std::size_t>(v)];
    const double s = std[static_cast<std::size_t>(v)];
    for (long long t = 0; t < batch.t_steps; ++t) row[t] = row[t] * s + m;
  }
}

namespace {

[[noreturn]] void parse_fail(const std::string& path, std::size_t line_no, const std::string& what) {
  fail_data(path + ": line " + std::to_string(line_no) + ": " + what);
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace

SeriesBatch load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_data("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) fail_data(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_commas(line);
  if (header.size() < 2 || header[0] != "time") {
    parse_fail(path, 1, "header must be time,<var_0>,... got '" + line + "'");
  }
  SeriesBatch batch;
  batch.n_vars = static_cast<int>(header.size()) - 1;
  batch.var_names.assign(header.begin() + 1, header.end());

  // Column-major staging; transposed into the variable-major layout at the end.
  std::vector<double> rows;
  std::vector<std::uint8_t> seen;
  std::size_t line_no = 1;
  long long expected_t = 0;
  bool first_row = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_commas(line);
    if (cells.size() != header.size()) {
      parse_fail(path, line_no,
                 "expected " + std::to_string(header.size()) + " columns, got " +
                     std::to_string(cells.size()));
    }
    long long t = 0;
    {
      const std::string& cell = cells[0];
      auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), t);
      if (ec != std::errc() || end != cell.data() + cell.size()) {
        parse_fail(path, line_no, "cannot parse time value '" + cell + "'");
      }
    }
    if (first_row) {
      batch.t0 = t;
      expected_t = t;
      first_row = false;
    }
    if (t != expected_t) {
      parse_fail(path, line_no,
                 "time " + std::to_string(t) + " is not the expected consecutive step " +
                     std::to_string(expected_t));
    }
    ++expected_t;
    for (std::size_t c = 1; c < cells.size(); ++c) {
      const std::string& cell = cells[c];
      if (cell.empty()) {
        rows.push_back(0.0);
        seen.push_back(0);
        continue;
      }
      double v = 0.0;
      auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || end != cell.data() + cell.size()) {
        parse_fail(path, line_no,
                   "cannot parse '" + cell + "' for variable " + batch.var_names[c - 1]);
      }
      if (!std::isfinite(v)) {
        parse_fail(path, line_no, "non-finite value for variable " + batch.var_names[c - 1]);
      }
      rows.push_back(v);
      seen.push_back(1);
    }
  }
  batch.t_steps = static_cast<long long>(rows.size()) / batch.n_vars;
  if (batch.t_steps == 0) fail_data(path + ": no data rows");
  batch.values.resize(rows.size());
  batch.observed.resize(rows.size());
  for (long long t = 0; t < batch.t_steps; ++t) {
    for (int v = 0; v < batch.n_vars; ++v) {
      const std::size_t src = static_cast<std::size_t>(t) * batch.n_vars + v;
      const std::size_t dst = static_cast<std::size_t>(v) * batch.t_steps + t;
      batch.values[dst] = rows[src];
      batch.observed[dst] = seen[src];
    }
  }
  batch.impute_missing();
  return batch;
}

void save_csv(const SeriesBatch& batch, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail_data("cannot write " + path);
  out << "time";
  for (const auto& name : batch.var_names) out << ',' << name;
  out << '\n';
  char buf[40];
  for (long long t = 0; t < batch.t_steps; ++t) {
    out << (batch.t0 + t);
    for (int v = 0; v < batch.n_vars; ++v) {
      out << ',';
      if (!batch.is_observed(v, t)) continue;  // masked cells stay empty
      std::snprintf(buf, sizeof buf, "%.17g", batch.at(v, t));
      out << buf;
    }
    out << '\n';
  }
  if (!out) fail_data("short write to " + path);
}

void SynthSpec::validate() const {
  if (n_vars < 1) fail_usage("generate: n_vars must be positive");
  if (t_steps < 2) fail_usage("generate: t_steps must be at least 2");
  if (cycle_length < 1) fail_usage("generate: cycle_length must be positive");
  if (lt_timescale <= 0.0) fail_usage("generate: lt_timescale must be positive");
  if (lt_sigma_scale < 0.0 || se_sigma_scale < 0.0 || st_sigma_scale < 0.0 ||
      ce_sigma_scale < 0.0) {
    fail_usage("generate: sigma scales must be non-negative");
  }
  if (st_shock_rate < 0.0 || st_shock_rate > 1.0 || ce_shock_rate < 0.0 || ce_shock_rate > 1.0) {
    fail_usage("generate: shock rates must lie in [0,1]");
  }
  if (st_shock_duration < 1 || ce_shock_duration < 1) {
    fail_usage("generate: shock durations must be positive");
  }
  if (ce_groups < 1 || ce_groups > n_vars) {
    fail_usage("generate: ce_groups must lie in [1, n_vars]");
  }
  if (residual_std < 0.0) fail_usage("generate: residual_std must be non-negative");
  if (lt_ramp_begin_frac < 0.0 || lt_ramp_begin_frac >= 1.0) {
    fail_usage("generate: lt_ramp_begin_frac must lie in [0,1)");
  }
}

namespace {

// Timescale of the slowly varying log-scale factors.
constexpr double kScaleTimescale = 50.0;

// Stationary AR(1) with unit variance: x_{t+1} = rho x_t + sqrt(1-rho^2) xi.
std::vector<double> ou_trace(Rng& rng, long long t_steps, double timescale) {
  const double rho = std::exp(-1.0 / timescale);
  const double innov = std::sqrt(1.0 - rho * rho);
  std::vector<double> x(static_cast<std::size_t>(t_steps));
  x[0] = rng.normal();
  for (long long t = 1; t < t_steps; ++t) {
    x[static_cast<std::size_t>(t)] = rho * x[static_cast<std::size_t>(t - 1)] + innov * rng.normal();
  }
  return x;
}

// Exponentially decaying impulses arriving as a Bernoulli process.
std::vector<double> shock_trace(Rng& rng, long long t_steps, double rate, double mag,
                                int duration) {
  const double decay = std::exp(-1.0 / static_cast<double>(duration));
  std::vector<double> x(static_cast<std::size_t>(t_steps));
  double level = 0.0;
  for (long long t = 0; t < t_steps; ++t) {
    level *= decay;
    if (rate > 0.0 && rng.uniform() < rate) level += mag * rng.normal();
    x[static_cast<std::size_t>(t)] = level;
  }
  return x;
}

SeriesBatch trace_view(const SeriesBatch& like, const std::vector<double>& trace) {
  SeriesBatch out;
  out.n_vars = like.n_vars;
  out.t_steps = like.t_steps;
  out.t0 = like.t0;
  out.var_names = like.var_names;
  out.cycle_hint = like.cycle_hint;
  out.values = trace;
  out.observed.assign(trace.size(), 1);
  return out;
}

}  // namespace

Generated generate(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const long long t_steps = spec.t_steps;
  const std::size_t total = static_cast<std::size_t>(spec.n_vars) * t_steps;

  Generated gen;
  SeriesBatch& series = gen.series;
  series.n_vars = spec.n_vars;
  series.t_steps = t_steps;
  series.var_names.reserve(static_cast<std::size_t>(spec.n_vars));
  for (int v = 0; v < spec.n_vars; ++v) series.var_names.push_back("v" + std::to_string(v));
  series.cycle_hint = spec.cycle_length;
  series.values.resize(total);
  series.observed.assign(total, 1);

  GroundTruth& truth = gen.truth;
  for (auto* field : {&truth.mu_lt, &truth.sigma_lt, &truth.mu_se, &truth.sigma_se, &truth.mu_st,
                      &truth.sigma_st, &truth.mu_ce, &truth.sigma_ce, &truth.residual}) {
    field->resize(total);
  }

  // Group-shared co-evolving factors are drawn first so per-variable draw
  // counts cannot disturb them.
  std::vector<std::vector<double>> group_mu(static_cast<std::size_t>(spec.ce_groups));
  std::vector<std::vector<double>> group_logsig(static_cast<std::size_t>(spec.ce_groups));
  for (int g = 0; g < spec.ce_groups; ++g) {
    group_mu[static_cast<std::size_t>(g)] =
        shock_trace(rng, t_steps, spec.ce_shock_rate, spec.ce_shock_mag, spec.ce_shock_duration);
    group_logsig[static_cast<std::size_t>(g)] = ou_trace(rng, t_steps, kScaleTimescale);
  }

  const long long ramp_start =
      static_cast<long long>(spec.lt_ramp_begin_frac * static_cast<double>(t_steps));
  const double ramp_span = static_cast<double>(std::max<long long>(1, t_steps - ramp_start));

  for (int v = 0; v < spec.n_vars; ++v) {
    const std::size_t base = static_cast<std::size_t>(v) * t_steps;
    const int group = v * spec.ce_groups / spec.n_vars;

    const std::vector<double> lt_drift = ou_trace(rng, t_steps, spec.lt_timescale);
    const std::vector<double> lt_logsig = ou_trace(rng, t_steps, kScaleTimescale);
    std::vector<double> se_profile(static_cast<std::size_t>(spec.cycle_length));
    for (double& p : se_profile) p = spec.se_amp * rng.normal();
    std::vector<double> se_logsig(static_cast<std::size_t>(spec.cycle_length));
    for (double& p : se_logsig) p = rng.normal();
    const std::vector<double> st_shocks =
        shock_trace(rng, t_steps, spec.st_shock_rate, spec.st_shock_mag, spec.st_shock_duration);
    const std::vector<double> st_logsig = ou_trace(rng, t_steps, kScaleTimescale);

    for (long long t = 0; t < t_steps; ++t) {
      const std::size_t at = base + static_cast<std::size_t>(t);
      const std::size_t ts = static_cast<std::size_t>(t);
      const int phase = static_cast<int>(t % spec.cycle_length);
      double mu = spec.base_level + spec.lt_amp * lt_drift[ts];
      if (spec.lt_ramp != 0.0 && t >= ramp_start) {
        mu += spec.lt_ramp * spec.base_level * static_cast<double>(t - ramp_start) / ramp_span;
      }
      truth.mu_lt[at] = mu;
      truth.sigma_lt[at] = std::exp(spec.lt_sigma_scale * lt_logsig[ts]);
      truth.mu_se[at] = se_profile[static_cast<std::size_t>(phase)];
      truth.sigma_se[at] =
          std::exp(spec.se_sigma_scale * se_logsig[static_cast<std::size_t>(phase)]);
      truth.mu_st[at] = st_shocks[ts];
      truth.sigma_st[at] = std::exp(spec.st_sigma_scale * st_logsig[ts]);
      truth.mu_ce[at] = group_mu[static_cast<std::size_t>(group)][ts];
      truth.sigma_ce[at] =
          std::exp(spec.ce_sigma_scale * group_logsig[static_cast<std::size_t>(group)][ts]);
      truth.residual[at] = spec.residual_std * rng.normal();
    }
  }

  // Observable series: innermost residual outward through the four stages.
  for (std::size_t at = 0; at < total; ++at) {
    const double z3 = truth.sigma_ce[at] * truth.residual[at] + truth.mu_ce[at];
    const double z2 = truth.sigma_st[at] * z3 + truth.mu_st[at];
    const double z1 = truth.sigma_se[at] * z2 + truth.mu_se[at];
    series.values[at] = truth.sigma_lt[at] * z1 + truth.mu_lt[at];
  }
  return gen;
}

void save_truth_csvs(const Generated& gen, const std::string& dir, const std::string& basename) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  const struct {
    const char* component;
    const char* kind;
    const std::vector<double>* trace;
  } files[] = {
      {"lt", "mu", &gen.truth.mu_lt},       {"lt", "sigma", &gen.truth.sigma_lt},
      {"se", "mu", &gen.truth.mu_se},       {"se", "sigma", &gen.truth.sigma_se},
      {"st", "mu", &gen.truth.mu_st},       {"st", "sigma", &gen.truth.sigma_st},
      {"ce", "mu", &gen.truth.mu_ce},       {"ce", "sigma", &gen.truth.sigma_ce},
  };
  for (const auto& f : files) {
    const std::string name = basename + "." + f.component + "." + f.kind + ".csv";
    save_csv(trace_view(gen.series, *f.trace), (root / name).string());
  }
}

SeriesBatch corrupt_gaussian(const SeriesBatch& batch, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) fail_usage("corrupt: noise sigma must be non-negative");
  SeriesBatch out = batch;
  if (sigma == 0.0) return out;
  Rng rng(seed);
  for (int v = 0; v < out.n_vars; ++v) {
    double* row = out.values.data() + static_cast<std::size_t>(v) * out.t_steps;
    for (long long t = 0; t < out.t_steps; ++t) row[t] += sigma * rng.normal();
  }
  return out;
}

SeriesBatch corrupt_missing(const SeriesBatch& batch, double rate, std::uint64_t seed) {
  if (rate < 0.0 || rate > 1.0) fail_usage("corrupt: missing rate must lie in [0,1]");
  SeriesBatch out = batch;
  Rng rng(seed);
  for (int v = 0; v < out.n_vars; ++v) {
    std::uint8_t* seen = out.observed.data() + static_cast<std::size_t>(v) * out.t_steps;
    double* row = out.values.data() + static_cast<std::size_t>(v) * out.t_steps;
    for (long long t = 0; t < out.t_steps; ++t) {
      if (rng.uniform() < rate) {
        seen[t] = 0;
        row[t] = 0.0;
      }
    }
  }
  out.impute_missing();
  return out;
}

CycleDetection detect_cycle(const SeriesBatch& batch, int max_period) {
  if (max_period < 2) fail_usage("detect_cycle: max_period must be at least 2");
  if (batch.t_steps < 2LL * max_period) {
    fail_data("detect_cycle: series of " + std::to_string(batch.t_steps) +
              " steps is shorter than 2 * max_period = " + std::to_string(2 * max_period));
  }
  const long long t_steps = batch.t_steps;
  std::vector<double> acf(static_cast<std::size_t>(max_period) + 1, 0.0);
  int used_vars = 0;
  std::vector<double> centered(static_cast<std::size_t>(t_steps));
  for (int v = 0; v < batch.n_vars; ++v) {
    const double* row = batch.row(v);
    double sum = 0.0;
    for (long long t = 0; t < t_steps; ++t) sum += row[t];
    const double mean = sum / static_cast<double>(t_steps);
    double denom = 0.0;
    for (long long t = 0; t < t_steps; ++t) {
      centered[static_cast<std::size_t>(t)] = row[t] - mean;
      denom += centered[static_cast<std::size_t>(t)] * centered[static_cast<std::size_t>(t)];
    }
    if (denom <= 0.0) continue;
    ++used_vars;
    for (int lag = 2; lag <= max_period; ++lag) {
      double num = 0.0;
      for (long long t = lag; t < t_steps; ++t) {
        num += centered[static_cast<std::size_t>(t)] * centered[static_cast<std::size_t>(t - lag)];
      }
      acf[static_cast<std::size_t>(lag)] += num / denom;
    }
  }
  CycleDetection out;
  out.period = 2;
  out.peak = 0.0;
  if (used_vars == 0) return out;
  double best = -2.0;
  for (int lag = 2; lag <= max_period; ++lag) {
    const double mean_acf = acf[static_cast<std::size_t>(lag)] / used_vars;
    if (mean_acf > best) {
      best = mean_acf;
      out.period = lag;
    }
  }
  out.peak = best;
  return out;
}

}  // namespace scnn
