#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "data.hpp"
#include "doctest.h"
#include "network.hpp"
#include "oracles.hpp"
#include "rng.hpp"
#include "train.hpp"

using scnn::Baseline;
using scnn::Model;
using scnn::ModelConfig;
using scnn::SeriesBatch;
using scnn::TrainConfig;

namespace {

ModelConfig small_model_config(int n_vars) {
  ModelConfig cfg;
  cfg.n_vars = n_vars;
  cfg.input_steps = 16;
  cfg.horizons = 2;
  cfg.channels = 2;
  cfg.blocks = 1;
  cfg.cycle_length = 4;
  cfg.short_term_window = 4;
  cfg.validate();
  return cfg;
}

SeriesBatch small_data(int n_vars, long long t_steps, std::uint64_t seed) {
  scnn::SynthSpec spec;
  spec.n_vars = n_vars;
  spec.t_steps = t_steps;
  spec.cycle_length = 4;
  spec.seed = seed;
  spec.ce_groups = std::max(1, n_vars / 2);
  spec.residual_std = 0.5;
  return scnn::generate(spec).series;
}

SeriesBatch flat_series(int n_vars, long long t_steps, double level) {
  SeriesBatch b;
  b.n_vars = n_vars;
  b.t_steps = t_steps;
  b.values.assign(static_cast<std::size_t>(n_vars) * t_steps, level);
  b.observed.assign(b.values.size(), 1);
  for (int v = 0; v < n_vars; ++v) b.var_names.push_back("v" + std::to_string(v));
  return b;
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("window origins cover exactly the feasible range") {
  auto origins = scnn::make_windows(10, 4, 2);
  CHECK(origins == std::vector<long long>{3, 4, 5, 6, 7});
  CHECK(scnn::make_windows(6, 4, 2) == std::vector<long long>{3});
  CHECK(scnn::make_windows(5, 4, 2).empty());
}

TEST_CASE("chronological split keeps straddlers out") {
  auto split = scnn::split_windows(100, 8, 2, 0.2, 0.2);
  CHECK(split.train_end == 60);
  CHECK(split.val_end == 80);
  CHECK(split.train.front() == 7);
  CHECK(split.train.back() == 57);
  CHECK(split.train.size() == 51);
  CHECK(split.val.front() == 59);
  CHECK(split.val.back() == 77);
  CHECK(split.test.front() == 79);
  CHECK(split.test.back() == 97);
  for (long long t : split.train) CHECK(t + 2 < 60);
  for (long long t : split.val) {
    CHECK(t + 1 >= 60);
    CHECK(t + 2 < 80);
  }
  for (long long t : split.test) CHECK(t + 1 >= 80);
}

TEST_CASE("zero learning rate leaves parameters untouched") {
  auto data = small_data(2, 120, 3);
  Model model(small_model_config(2), 5);
  std::vector<std::vector<double>> before;
  for (auto& p : model.params()) before.push_back(p.node->data);
  TrainConfig cfg;
  cfg.lr = 0.0;
  cfg.max_epochs = 1;
  scnn::fit(model, data, cfg);
  for (std::size_t i = 0; i < before.size(); ++i) {
    CHECK(model.params()[i].node->data == before[i]);
  }
}

TEST_CASE("training reduces the loss on learnable data") {
  auto data = small_data(2, 160, 7);
  Model model(small_model_config(2), 9);
  TrainConfig cfg;
  cfg.max_epochs = 12;
  cfg.patience = 12;
  cfg.lr = 3e-3;
  cfg.seed = 11;
  auto fitres = scnn::fit(model, data, cfg);
  REQUIRE(fitres.train_curve.size() >= 2);
  CHECK(fitres.train_curve.back() < fitres.train_curve.front());
  CHECK(fitres.best_epoch >= 0);
  CHECK(std::isfinite(fitres.best_val));
}

TEST_CASE("training is reproducible for a fixed seed") {
  auto data = small_data(2, 140, 13);
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.lr = 1e-3;
  cfg.seed = 21;
  Model a(small_model_config(2), 31);
  Model b(small_model_config(2), 31);
  auto ra = scnn::fit(a, data, cfg);
  auto rb = scnn::fit(b, data, cfg);
  CHECK(ra.train_curve == rb.train_curve);
  CHECK(ra.val_curve == rb.val_curve);
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    CHECK(a.params()[i].node->data == b.params()[i].node->data);
  }
}

TEST_CASE("diverging runs stop with a numeric error naming the position") {
  auto data = small_data(2, 140, 17);
  Model model(small_model_config(2), 33);
  TrainConfig cfg;
  cfg.max_epochs = 4;
  cfg.lr = 1e300;
  try {
    scnn::fit(model, data, cfg);
    FAIL("expected divergence");
  } catch (const scnn::Error& e) {
    CHECK(e.code() == scnn::Status::Numeric);
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("validation data never leaks into the fitted parameters") {
  auto data = small_data(2, 160, 19);
  TrainConfig cfg;
  cfg.max_epochs = 2;
  cfg.lr = 1e-3;
  auto probe = scnn::split_windows(data.t_steps, 16, 2, cfg.val_frac, cfg.test_frac);
  SeriesBatch poisoned = data;
  for (int v = 0; v < data.n_vars; ++v) {
    for (long long t = probe.val_end; t < data.t_steps; ++t) {
      poisoned.values[static_cast<std::size_t>(v) * data.t_steps + t] = 1e6;
    }
  }
  Model a(small_model_config(2), 41);
  Model b(small_model_config(2), 41);
  auto ra = scnn::fit(a, data, cfg);
  auto rb = scnn::fit(b, poisoned, cfg);
  CHECK(ra.train_curve == rb.train_curve);
  CHECK(ra.val_curve == rb.val_curve);
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    CHECK(a.params()[i].node->data == b.params()[i].node->data);
  }
}

TEST_CASE("metric arithmetic on a hand-built case") {
  // Window of zeros, targets 1 and 2: persistence predicts zero, so the
  // errors are exactly 1 and 2.
  SeriesBatch b = flat_series(1, 6, 0.0);
  b.values[4] = 1.0;
  b.values[5] = 2.0;
  auto report = scnn::evaluate_baseline(Baseline::Persistence, b, {3}, 4, 2, 2);
  REQUIRE(report.horizons.size() == 2);
  CHECK(report.horizons[0].mae == 1.0);
  CHECK(report.horizons[1].mae == 2.0);
  CHECK(report.aggregate.mae == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(report.aggregate.rmse == doctest::Approx(std::sqrt(2.5)).epsilon(1e-15));
  CHECK(report.aggregate.mape_pct == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(report.aggregate.n == 2);
  CHECK(report.aggregate.rmse >= report.aggregate.mae);
}

TEST_CASE("near-zero targets fall out of the relative error") {
  SeriesBatch b = flat_series(1, 6, 0.0);
  b.values[4] = 1e-9;   // skipped by the relative metric, kept by mae
  b.values[5] = 2.0;
  auto report = scnn::evaluate_baseline(Baseline::Persistence, b, {3}, 4, 2, 2);
  CHECK(report.aggregate.n == 2);
  CHECK(report.aggregate.mape_pct == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("masked targets are skipped") {
  SeriesBatch b = flat_series(1, 6, 0.0);
  b.values[4] = 1.0;
  b.values[5] = 2.0;
  b.observed[5] = 0;
  auto report = scnn::evaluate_baseline(Baseline::Persistence, b, {3}, 4, 2, 2);
  CHECK(report.aggregate.n == 1);
  CHECK(report.aggregate.mae == 1.0);
}

TEST_CASE("each baseline is exact on the pattern it assumes") {
  auto flat = flat_series(2, 40, 3.5);
  auto origins = scnn::make_windows(40, 8, 2);
  for (auto kind : {Baseline::Persistence, Baseline::SeasonalPersistence,
                    Baseline::HistoricalMean}) {
    auto report = scnn::evaluate_baseline(kind, flat, origins, 8, 2, 4);
    CHECK(report.aggregate.mae == 0.0);
    CHECK(report.aggregate.rmse == 0.0);
  }

  SeriesBatch wave = flat_series(1, 48, 0.0);
  for (long long t = 0; t < 48; ++t) wave.values[t] = (t % 4 == 0) ? 2.0 : -1.0;
  auto wave_report =
      scnn::evaluate_baseline(Baseline::SeasonalPersistence, wave, scnn::make_windows(48, 8, 3), 8, 3, 4);
  CHECK(wave_report.aggregate.mae == 0.0);

  SeriesBatch ramp = flat_series(1, 40, 0.0);
  for (long long t = 0; t < 40; ++t) ramp.values[t] = static_cast<double>(t);
  auto ramp_report =
      scnn::evaluate_baseline(Baseline::Persistence, ramp, scnn::make_windows(40, 8, 3), 8, 3, 4);
  CHECK(ramp_report.horizons[0].mae == 1.0);
  CHECK(ramp_report.horizons[1].mae == 2.0);
  CHECK(ramp_report.horizons[2].mae == 3.0);
}

TEST_CASE("historical mean predicts the window average") {
  SeriesBatch b = flat_series(1, 8, 0.0);
  for (int t = 0; t < 8; ++t) b.values[t] = static_cast<double>(t + 1);
  std::vector<double> out(2);
  scnn::baseline_forecast(Baseline::HistoricalMean, b.values.data(), 1, 6, 2, 2, out.data());
  CHECK(out[0] == doctest::Approx(3.5).epsilon(1e-15));
  CHECK(out[1] == doctest::Approx(3.5).epsilon(1e-15));
}

TEST_CASE("baseline names parse") {
  CHECK(scnn::baseline_from_string("persistence") == Baseline::Persistence);
  CHECK(scnn::baseline_from_string("seasonal_persistence") == Baseline::SeasonalPersistence);
  CHECK(scnn::baseline_from_string("historical_mean") == Baseline::HistoricalMean);
  CHECK_THROWS_AS(scnn::baseline_from_string("oracle"), scnn::Error);
}

TEST_CASE("model evaluation reports original units") {
  auto cfg = small_model_config(1);
  Model model(cfg, 51);
  model.norm_mean = {100.0};
  model.norm_std = {7.0};
  auto data = small_data(1, 60, 23);
  for (double& v : data.values) v = 100.0 + 7.0 * v;
  auto origins = scnn::make_windows(data.t_steps, cfg.input_steps, cfg.horizons);
  auto report = scnn::evaluate(model, data, origins);
  CHECK(report.n_windows == static_cast<long long>(origins.size()));

  // Recompute the aggregate from the public forecast call.
  double abs_sum = 0.0;
  long long count = 0;
  std::vector<double> window(static_cast<std::size_t>(cfg.input_steps));
  for (long long t : origins) {
    for (int i = 0; i < cfg.input_steps; ++i) {
      window[static_cast<std::size_t>(i)] = data.at(0, t - cfg.input_steps + 1 + i);
    }
    auto fc = model.forecast(window.data(), t);
    for (int i = 1; i <= cfg.horizons; ++i) {
      abs_sum += std::abs(data.at(0, t + i) - fc.mean[static_cast<std::size_t>(i - 1)]);
      ++count;
    }
  }
  CHECK(report.aggregate.mae == doctest::Approx(abs_sum / static_cast<double>(count)).epsilon(1e-9));
}

TEST_CASE("loss curve and metric tables serialize as csv") {
  scnn::FitResult fake;
  fake.train_curve = {2.0, 1.0};
  fake.val_curve = {2.5, 1.5};
  fake.best_epoch = 2;
  fake.best_val = 1.5;
  std::ostringstream loss;
  scnn::write_loss_curve(fake, loss);
  CHECK(loss.str().find("epoch,train_loss,val_loss\n") == 0);
  CHECK(loss.str().find("\n1,") != std::string::npos);

  scnn::EvalReport report;
  report.horizons.resize(2);
  report.horizons[0].mae = 0.125;
  report.horizons[0].n = 4;
  report.horizons[1].mae = 0.25;
  report.horizons[1].n = 4;
  report.aggregate.mae = 0.1875;
  report.aggregate.n = 8;
  std::ostringstream metrics;
  scnn::write_eval_csv(report, metrics);
  std::istringstream lines(metrics.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "horizon,mae,rmse,mape_pct,n");
  std::getline(lines, line);
  CHECK(line.rfind("0,0.1875,", 0) == 0);
  std::getline(lines, line);
  CHECK(line.rfind("1,0.125,", 0) == 0);
}

}  // TEST_SUITE
