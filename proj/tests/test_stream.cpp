#include <cmath>
#include <vector>

#include "doctest.h"
#include "network.hpp"
#include "oracles.hpp"
#include "rng.hpp"
#include "stream.hpp"

using scnn::Model;
using scnn::ModelConfig;
using scnn::StreamState;

namespace {

ModelConfig stream_config() {
  ModelConfig cfg;
  cfg.n_vars = 2;
  cfg.input_steps = 16;
  cfg.horizons = 2;
  cfg.channels = 2;
  cfg.blocks = 2;
  cfg.cycle_length = 4;
  cfg.short_term_window = 4;
  cfg.validate();
  return cfg;
}

}  // namespace

TEST_SUITE("stream") {

TEST_CASE("exponential update endpoints") {
  CHECK(scnn::ema_update(3.0, 7.0, 0.0) == 7.0);
  CHECK(scnn::ema_update(3.0, 7.0, 1.0) == 3.0);
  CHECK(scnn::ema_update(0.0, 4.0, 0.5) == 2.0);
}

TEST_CASE("bias-corrected read is exact on constant input") {
  const double lambda = 0.9;
  double acc = 0.0;
  for (int k = 1; k <= 40; ++k) {
    acc = scnn::ema_update(acc, 2.5, lambda);
    CHECK(scnn::ema_read(acc, lambda, k) == doctest::Approx(2.5).epsilon(1e-12));
  }
  CHECK(scnn::ema_read(0.0, lambda, 0) == 0.0);
  CHECK(scnn::ema_read(5.0, 0.0, 3) == 5.0);
}

TEST_CASE("bias-corrected mean tracks a slow drift like the window mean") {
  const int window = 16;
  const double lambda = 1.0 - 1.0 / static_cast<double>(window);
  std::vector<double> series;
  for (int t = 0; t < 240; ++t) {
    series.push_back(std::sin(2.0 * 3.14159265358979323846 * static_cast<double>(t) / 10000.0));
  }
  double acc = 0.0;
  double worst = 0.0;
  for (int t = 0; t < 240; ++t) {
    acc = scnn::ema_update(acc, series[t], lambda);
    if (t >= 5 * window) {
      const double smoothed = scnn::ema_read(acc, lambda, t + 1);
      const double exact = oracle::window_mean_at(series, t, window, 1);
      worst = std::max(worst, std::abs(smoothed - exact));
    }
  }
  CHECK(worst <= 0.02);
}

TEST_CASE("pushing before initialization is rejected") {
  StreamState state;
  const double obs[2] = {0.0, 0.0};
  CHECK_THROWS_AS(state.push(obs), scnn::Error);
}

TEST_CASE("non-finite observations are rejected") {
  auto cfg = stream_config();
  Model model(cfg, 3);
  StreamState state;
  state.init(&model, false);
  const double bad[2] = {1.0, std::nan("")};
  CHECK_THROWS_AS(state.push(bad), scnn::Error);
}

TEST_CASE("exact mode replays the batch forecaster once warmed up") {
  auto cfg = stream_config();
  Model model(cfg, 7);
  model.norm_mean = {1.0, -2.0};
  model.norm_std = {2.0, 0.5};
  StreamState state;
  state.init(&model, false);

  scnn::Rng rng(8);
  std::vector<double> history;
  std::vector<double> level = {1.0, -2.0};
  double worst = 0.0;
  long long compared = 0;
  for (int step = 0; step < 60; ++step) {
    double obs[2];
    for (int v = 0; v < 2; ++v) {
      level[static_cast<std::size_t>(v)] += 0.1 * rng.normal();
      obs[v] = level[static_cast<std::size_t>(v)];
    }
    history.insert(history.end(), obs, obs + 2);
    auto fc = state.push(obs);
    CHECK(fc.origin_t == step);
    if (step + 1 < cfg.input_steps) continue;

    std::vector<double> window(static_cast<std::size_t>(cfg.n_vars) * cfg.input_steps);
    for (int v = 0; v < cfg.n_vars; ++v) {
      for (int i = 0; i < cfg.input_steps; ++i) {
        const int src = step + 1 - cfg.input_steps + i;
        window[static_cast<std::size_t>(v) * cfg.input_steps + i] =
            history[static_cast<std::size_t>(src) * cfg.n_vars + v];
      }
    }
    auto want = model.forecast(window.data(), step);
    for (std::size_t i = 0; i < want.mean.size(); ++i) {
      worst = std::max(worst, std::abs(fc.mean[i] - want.mean[i]));
      worst = std::max(worst, std::abs(fc.std[i] - want.std[i]));
    }
    ++compared;
  }
  CHECK(compared > 40);
  CHECK(worst <= 1e-9);
}

TEST_CASE("both stream modes agree on a constant signal") {
  auto cfg = stream_config();
  Model model(cfg, 11);
  model.norm_mean = {0.5, 0.25};
  model.norm_std = {1.5, 0.75};
  StreamState exact;
  StreamState smoothed;
  exact.init(&model, false);
  smoothed.init(&model, true);
  const double obs[2] = {2.0, -1.0};
  double worst = 0.0;
  for (int step = 0; step < 10 * cfg.input_steps; ++step) {
    auto fe = exact.push(obs);
    auto fs = smoothed.push(obs);
    if (step + 1 < cfg.input_steps) continue;
    for (std::size_t i = 0; i < fe.mean.size(); ++i) {
      worst = std::max(worst, std::abs(fe.mean[i] - fs.mean[i]));
      worst = std::max(worst, std::abs(fe.std[i] - fs.std[i]));
    }
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("smoothed mode stays finite and close on drifting data") {
  auto cfg = stream_config();
  Model model(cfg, 13);
  StreamState exact;
  StreamState smoothed;
  exact.init(&model, false);
  smoothed.init(&model, true);
  double worst = 0.0;
  for (int step = 0; step < 200; ++step) {
    const double phase = static_cast<double>(step);
    const double obs[2] = {std::sin(2.0 * 3.14159265358979323846 * phase / 2000.0),
                           0.5 * std::cos(2.0 * 3.14159265358979323846 * phase / 2000.0)};
    auto fe = exact.push(obs);
    auto fs = smoothed.push(obs);
    if (step < 5 * cfg.input_steps) continue;
    for (std::size_t i = 0; i < fe.mean.size(); ++i) {
      CHECK(std::isfinite(fs.mean[i]));
      CHECK(fs.std[i] > 0.0);
      worst = std::max(worst, std::abs(fe.mean[i] - fs.mean[i]));
    }
  }
  // The smoothed statistics lag differently than rectangular windows; on
  // near-constant input the two forecasts must stay close.
  CHECK(worst <= 0.25);
}

TEST_CASE("reinitialization clears accumulated state") {
  auto cfg = stream_config();
  Model model(cfg, 17);
  StreamState state;
  state.init(&model, true);
  const double obs[2] = {1.0, 2.0};
  for (int i = 0; i < 5; ++i) state.push(obs);
  CHECK(state.steps() == 5);
  state.init(&model, true);
  CHECK(state.steps() == 0);
  auto fc = state.push(obs);
  CHECK(fc.origin_t == 0);

  StreamState fresh;
  fresh.init(&model, true);
  auto fc2 = fresh.push(obs);
  CHECK(fc.mean == fc2.mean);
  CHECK(fc.std == fc2.std);
}

}  // TEST_SUITE
