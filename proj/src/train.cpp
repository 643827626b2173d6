#include "train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

#include "rng.hpp"

namespace scnn {

void TrainConfig::validate() const {
  if (batch_size < 1) fail_usage("train: batch_size must be positive");
  if (lr < 0.0) fail_usage("train: lr must be non-negative");
  if (max_epochs < 1) fail_usage("train: max_epochs must be positive");
  if (patience < 1) fail_usage("train: patience must be positive");
  if (val_frac < 0.0 || test_frac < 0.0 || val_frac + test_frac >= 1.0) {
    fail_usage("train: val_frac and test_frac must be non-negative and sum below 1");
  }
}

std::vector<long long> make_windows(long long t_steps, int t_in, int t_out) {
  if (t_in < 1 || t_out < 1) fail_usage("make_windows: t_in and t_out must be positive");
  std::vector<long long> origins;
  for (long long t = t_in - 1; t + t_out <= t_steps - 1; ++t) origins.push_back(t);
  return origins;
}

WindowSplit split_windows(long long t_steps, int t_in, int t_out, double val_frac,
                          double test_frac) {
  WindowSplit split;
  split.train_end =
      static_cast<long long>(static_cast<double>(t_steps) * (1.0 - val_frac - test_frac));
  split.val_end = static_cast<long long>(static_cast<double>(t_steps) * (1.0 - test_frac));
  for (long long t : make_windows(t_steps, t_in, t_out)) {
    if (t + t_out < split.train_end) {
      if (t - t_in + 1 >= 0) split.train.push_back(t);
    } else if (t + 1 >= split.train_end && t + t_out < split.val_end) {
      split.val.push_back(t);
    } else if (t + 1 >= split.val_end) {
      split.test.push_back(t);
    }
  }
  return split;
}

namespace {

void copy_window(const SeriesBatch& batch, long long origin, int t_in, std::vector<double>& out) {
  const int n = batch.n_vars;
  out.resize(static_cast<std::size_t>(n) * t_in);
  for (int v = 0; v < n; ++v) {
    const double* row = batch.row(v);
    for (int s = 0; s < t_in; ++s) {
      out[static_cast<std::size_t>(v) * t_in + s] = row[origin - t_in + 1 + s];
    }
  }
}

void copy_targets(const SeriesBatch& batch, long long origin, int t_out,
                  std::vector<double>& out) {
  const int n = batch.n_vars;
  out.resize(static_cast<std::size_t>(n) * t_out);
  for (int v = 0; v < n; ++v) {
    const double* row = batch.row(v);
    for (int i = 0; i < t_out; ++i) {
      out[static_cast<std::size_t>(v) * t_out + i] = row[origin + 1 + i];
    }
  }
}

double scalar_loss(const NodePtr& node) { return node->data[0]; }

std::vector<std::vector<double>> snapshot_params(const Model& model) {
  std::vector<std::vector<double>> snap;
  snap.reserve(model.params().size());
  for (const auto& p : model.params()) snap.push_back(p.node->data);
  return snap;
}

void restore_params(Model& model, const std::vector<std::vector<double>>& snap) {
  for (std::size_t i = 0; i < snap.size(); ++i) model.params()[i].node->data = snap[i];
}

double validation_loss(const Model& model, const SeriesBatch& std_data,
                       const std::vector<long long>& origins) {
  const ModelConfig& cfg = model.config();
  NoGradGuard guard;
  std::vector<double> window;
  std::vector<double> targets;
  double total = 0.0;
  for (long long origin : origins) {
    copy_window(std_data, origin, cfg.input_steps, window);
    copy_targets(std_data, origin, cfg.horizons, targets);
    Model::GraphOut out = model.build_forward(window.data(), false);
    const NodePtr loss = cfg.loss_mode == LossMode::Mse ? mse_loss(targets, out.main)
                                                        : mle_loss(targets, out.main);
    total += scalar_loss(loss);
  }
  return total / static_cast<double>(origins.size());
}

}  // namespace

FitResult fit(Model& model, const SeriesBatch& data, const TrainConfig& cfg) {
  cfg.validate();
  const ModelConfig& mc = model.config();
  if (data.n_vars != mc.n_vars) {
    fail_data("train: data has " + std::to_string(data.n_vars) + " variables but the model wants " +
              std::to_string(mc.n_vars));
  }

  FitResult result;
  result.split = split_windows(data.t_steps, mc.input_steps, mc.horizons, cfg.val_frac,
                               cfg.test_frac);
  if (result.split.train.empty()) {
    fail_data("train: no full training window fits in the training region of " +
              std::to_string(result.split.train_end) + " steps");
  }
  if (result.split.val.empty()) {
    fail_data("train: validation region holds no window; grow val_frac or the series");
  }

  SeriesBatch std_data = data;
  const Standardizer scaler = Standardizer::fit(std_data, result.split.train_end);
  scaler.transform(std_data);
  model.norm_mean = scaler.mean;
  model.norm_std = scaler.std;

  Rng rng(cfg.seed);
  std::vector<long long> order = result.split.train;
  std::vector<double> window;
  std::vector<double> targets;

  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best_snap = snapshot_params(model);
  int best_epoch = -1;
  int stale = 0;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t batch_start = 0;
    long long step = 0;
    while (batch_start < order.size()) {
      const std::size_t batch_end = std::min(batch_start + cfg.batch_size, order.size());
      const double inv_b = 1.0 / static_cast<double>(batch_end - batch_start);
      zero_grad(model.params());
      for (std::size_t w = batch_start; w < batch_end; ++w) {
        copy_window(std_data, order[w], mc.input_steps, window);
        copy_targets(std_data, order[w], mc.horizons, targets);
        Model::GraphOut out = model.build_forward(window.data(), mc.aux_weight > 0.0);
        const NodePtr loss = total_loss(targets, out.main, out.aux, mc.aux_weight, mc.loss_mode,
                                        mc.aux_loss_mode);
        const double value = scalar_loss(loss);
        if (!std::isfinite(value)) {
          fail_numeric("train: loss diverged at epoch " + std::to_string(epoch) + ", step " +
                       std::to_string(step));
        }
        epoch_loss += value;
        backward(scale(loss, inv_b));
      }
      adam_step(model.params(), cfg.lr, 0.9, 0.999, 1e-8);
      batch_start = batch_end;
      ++step;
    }
    result.train_curve.push_back(epoch_loss / static_cast<double>(order.size()));

    const double val = validation_loss(model, std_data, result.split.val);
    if (!std::isfinite(val)) {
      fail_numeric("train: validation loss diverged at epoch " + std::to_string(epoch));
    }
    result.val_curve.push_back(val);
    if (val < best_val) {
      best_val = val;
      best_epoch = epoch;
      best_snap = snapshot_params(model);
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }

  restore_params(model, best_snap);
  result.best_epoch = best_epoch;
  result.best_val = best_val;
  return result;
}

void write_loss_curve(const FitResult& fit, std::ostream& out) {
  char buf[64];
  out << "epoch,train_loss,val_loss\n";
  for (std::size_t e = 0; e < fit.train_curve.size(); ++e) {
    out << e;
    std::snprintf(buf, sizeof buf, ",%.17g", fit.train_curve[e]);
    out << buf;
    std::snprintf(buf, sizeof buf, ",%.17g", fit.val_curve[e]);
    out << buf << '\n';
  }
}

namespace {

struct MetricAccum {
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  double pct_sum = 0.0;
  long long n = 0;
  long long pct_n = 0;

  void add(double pred, double truth) {
    const double err = pred - truth;
    abs_sum += std::abs(err);
    sq_sum += err * err;
    ++n;
    if (std::abs(truth) >= 1e-3) {
      pct_sum += std::abs(err) / std::abs(truth);
      ++pct_n;
    }
  }

  HorizonMetrics finish() const {
    HorizonMetrics m;
    m.n = n;
    if (n > 0) {
      m.mae = abs_sum / static_cast<double>(n);
      m.rmse = std::sqrt(sq_sum / static_cast<double>(n));
    }
    if (pct_n > 0) m.mape_pct = 100.0 * pct_sum / static_cast<double>(pct_n);
    return m;
  }
};

template <typename Forecast>
EvalReport evaluate_impl(const SeriesBatch& raw, const std::vector<long long>& origins, int t_out,
                         Forecast&& forecast_fn) {
  EvalReport report;
  report.n_windows = static_cast<long long>(origins.size());
  std::vector<MetricAccum> per_horizon(static_cast<std::size_t>(t_out));
  MetricAccum aggregate;
  std::vector<double> preds;
  const auto start = std::chrono::steady_clock::now();
  for (long long origin : origins) {
    forecast_fn(origin, preds);
    for (int v = 0; v < raw.n_vars; ++v) {
      for (int i = 0; i < t_out; ++i) {
        if (!raw.is_observed(v, origin + 1 + i)) continue;
        const double truth = raw.at(v, origin + 1 + i);
        const double pred = preds[static_cast<std::size_t>(v) * t_out + i];
        per_horizon[static_cast<std::size_t>(i)].add(pred, truth);
        aggregate.add(pred, truth);
      }
    }
  }
  const auto stop = std::chrono::steady_clock::now();
  report.horizons.reserve(per_horizon.size());
  for (const auto& acc : per_horizon) report.horizons.push_back(acc.finish());
  report.aggregate = aggregate.finish();
  if (!origins.empty()) {
    report.wall_ms_per_window =
        std::chrono::duration<double, std::milli>(stop - start).count() /
        static_cast<double>(origins.size());
  }
  return report;
}

}  // namespace

EvalReport evaluate(const Model& model, const SeriesBatch& raw,
                    const std::vector<long long>& origins) {
  const ModelConfig& cfg = model.config();
  if (raw.n_vars != cfg.n_vars) {
    fail_data("evaluate: data has " + std::to_string(raw.n_vars) +
              " variables but the model wants " + std::to_string(cfg.n_vars));
  }
  std::vector<double> window;
  return evaluate_impl(raw, origins, cfg.horizons,
                       [&](long long origin, std::vector<double>& preds) {
                         copy_window(raw, origin, cfg.input_steps, window);
                         const ForecastDistribution f = model.forecast(window.data(), origin);
                         preds = f.mean;
                       });
}

void write_eval_csv(const EvalReport& report, std::ostream& out) {
  char buf[96];
  out << "horizon,mae,rmse,mape_pct,n\n";
  const auto row = [&](int horizon, const HorizonMetrics& m) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%lld", horizon, m.mae, m.rmse, m.mape_pct,
                  static_cast<long long>(m.n));
    out << buf << '\n';
  };
  row(0, report.aggregate);
  for (std::size_t i = 0; i < report.horizons.size(); ++i) {
    row(static_cast<int>(i) + 1, report.horizons[i]);
  }
}

Baseline baseline_from_string(const std::string& s) {
  if (s == "persistence") return Baseline::Persistence;
  if (s == "seasonal_persistence") return Baseline::SeasonalPersistence;
  if (s == "historical_mean") return Baseline::HistoricalMean;
  fail_usage("unknown baseline '" + s +
             "' (expected persistence, seasonal_persistence, or historical_mean)");
}

void baseline_forecast(Baseline kind, const double* window, int n_vars, int t_in, int t_out,
                       int cycle_length, double* out) {
  if (kind == Baseline::SeasonalPersistence && cycle_length > t_in) {
    fail_usage("seasonal_persistence needs at least cycle_length = " +
               std::to_string(cycle_length) + " input steps, got " + std::to_string(t_in));
  }
  for (int v = 0; v < n_vars; ++v) {
    const double* row = window + static_cast<std::size_t>(v) * t_in;
    double* pred = out + static_cast<std::size_t>(v) * t_out;
    switch (kind) {
      case Baseline::Persistence:
        for (int i = 0; i < t_out; ++i) pred[i] = row[t_in - 1];
        break;
      case Baseline::SeasonalPersistence:
        for (int i = 0; i < t_out; ++i) {
          int idx = t_in - 1 + (i + 1) - cycle_length;
          while (idx > t_in - 1) idx -= cycle_length;  // horizons past one cycle wrap around
          pred[i] = row[idx];
        }
        break;
      case Baseline::HistoricalMean: {
        double sum = 0.0;
        for (int s = 0; s < t_in; ++s) sum += row[s];
        const double mean = sum / static_cast<double>(t_in);
        for (int i = 0; i < t_out; ++i) pred[i] = mean;
        break;
      }
    }
  }
}

EvalReport evaluate_baseline(Baseline kind, const SeriesBatch& raw,
                             const std::vector<long long>& origins, int t_in, int t_out,
                             int cycle_length) {
  std::vector<double> window;
  return evaluate_impl(raw, origins, t_out, [&](long long origin, std::vector<double>& preds) {
    copy_window(raw, origin, t_in, window);
    preds.resize(static_cast<std::size_t>(raw.n_vars) * t_out);
    baseline_forecast(kind, window.data(), raw.n_vars, t_in, t_out, cycle_length, preds.data());
  });
}

}  // namespace scnn
