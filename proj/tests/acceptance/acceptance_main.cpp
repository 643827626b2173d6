// End-to-end qualification suite. Each check prints one PASS/FAIL line and
// the binary exits nonzero if any check fails. Thresholds are deliberately
// hard-coded; loosening them here is the wrong fix for a regression.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "data.hpp"
#include "decouple.hpp"
#include "network.hpp"
#include "oracles.hpp"
#include "rng.hpp"
#include "stream.hpp"
#include "train.hpp"

using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ---- 1: decouple/recompose round trip ------------------------------------

Outcome check_reconstruction() {
  scnn::Rng rng(2024);
  double worst = 0.0;
  const auto start = Clock::now();
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 1 + static_cast<int>(rng.bounded(8));
    const int t_len = 8 + static_cast<int>(rng.bounded(57));
    const int c = 1 + static_cast<int>(rng.bounded(4));
    scnn::DecoupleConfig cfg;
    cfg.n_vars = n;
    cfg.channels = c;
    cfg.cycle_length = 1 + static_cast<int>(rng.bounded(4));
    const int max_season = std::max(1, (t_len - 1) / cfg.cycle_length);
    cfg.season_window = 1 + static_cast<int>(rng.bounded(static_cast<std::uint64_t>(max_season)));
    cfg.long_term_window = std::min<int>(
        t_len, std::max(cfg.cycle_length * cfg.season_window,
                        2 + static_cast<int>(rng.bounded(static_cast<std::uint64_t>(t_len)))));
    cfg.short_term_window = 1 + static_cast<int>(rng.bounded(8));
    cfg.validate(t_len);

    auto z0 = scnn::tensor({n, t_len, c}, oracle::random_vector(rng, n * t_len * c, 2.0));
    auto logits = scnn::tensor({n, n}, oracle::random_vector(rng, n * n));
    scnn::NoGradGuard guard;
    auto out = scnn::decouple_block(z0, logits, cfg);
    const auto& comp = out.components;
    const auto& res = out.residuals;
    for (std::size_t i = 0; i < z0->size(); ++i) {
      const double z3 = comp.mu_ce->data[i] + comp.sigma_ce->data[i] * res.z4->data[i];
      const double z2 = comp.mu_st->data[i] + comp.sigma_st->data[i] * z3;
      const double z1 = comp.mu_se->data[i] + comp.sigma_se->data[i] * z2;
      const double z0v = comp.mu_lt->data[i] + comp.sigma_lt->data[i] * z1;
      worst = std::max(worst, std::abs(z0v - z0->data[i]));
    }
  }
  const double elapsed = seconds_since(start);
  char buf[160];
  std::snprintf(buf, sizeof buf, "max |error| %.3g over 100 inputs in %.1fs", worst, elapsed);
  return {worst < 1e-9 && elapsed < 10.0, buf};
}

// ---- 2: analytic gradients vs central differences ------------------------

Outcome check_gradients_full() {
  scnn::ModelConfig cfg;
  cfg.n_vars = 3;
  cfg.input_steps = 16;
  cfg.horizons = 2;
  cfg.channels = 2;
  cfg.blocks = 2;
  cfg.cycle_length = 4;
  cfg.short_term_window = 4;
  cfg.validate();
  scnn::Model model(cfg, 77);
  scnn::Rng rng(78);
  std::vector<double> window =
      oracle::random_vector(rng, static_cast<std::size_t>(cfg.n_vars) * cfg.input_steps);
  std::vector<double> truth =
      oracle::random_vector(rng, static_cast<std::size_t>(cfg.n_vars) * cfg.horizons);

  const auto start = Clock::now();
  std::vector<scnn::NodePtr> probes;
  for (auto& p : model.params()) probes.push_back(p.node);
  auto res = oracle::check_gradients(probes, [&] {
    auto g = model.build_forward(window.data(), true);
    return scnn::total_loss(truth, g.main, g.aux, cfg.aux_weight, cfg.loss_mode,
                            cfg.aux_loss_mode);
  });
  const double elapsed = seconds_since(start);
  char buf[200];
  std::snprintf(buf, sizeof buf, "%lld parameters checked, worst rel %.3g, %.1fs%s%s",
                res.checked, res.max_rel, elapsed, res.ok ? "" : "; first failure: ",
                res.ok ? "" : res.worst.c_str());
  return {res.ok && elapsed < 60.0, buf};
}

// ---- 3: windowed statistics against naive oracles ------------------------

Outcome check_window_oracles() {
  scnn::Rng rng(31337);
  long long mismatches = 0;
  long long compared = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const int t_len = 8 + static_cast<int>(rng.bounded(57));
    const int dil = 1 + static_cast<int>(rng.bounded(8));
    const int max_w = std::min(8, (t_len - 1) / dil + 1);
    const int w = 1 + static_cast<int>(rng.bounded(static_cast<std::uint64_t>(max_w)));
    std::vector<double> series = oracle::random_vector(rng, t_len, 2.0);
    scnn::DecoupleConfig cfg;
    cfg.n_vars = 1;
    cfg.channels = 1;
    cfg.long_term_window = std::max(2, std::min(t_len, w));
    cfg.cycle_length = dil;
    cfg.season_window = w;
    if (cfg.cycle_length * cfg.season_window > cfg.long_term_window) {
      cfg.long_term_window = std::min(t_len, cfg.cycle_length * cfg.season_window);
    }
    cfg.short_term_window = w;
    cfg.validate(t_len);
    scnn::NoGradGuard guard;
    auto x = scnn::tensor({1, t_len, 1}, series);
    auto lt = scnn::longterm_layer(x, cfg);
    auto se = scnn::seasonal_layer(x, cfg);
    auto st = scnn::shortterm_layer(x, cfg);
    for (int t = 0; t < t_len; ++t) {
      compared += 6;
      if (lt.mu->data[t] != oracle::window_mean_at(series, t, cfg.long_term_window, 1)) ++mismatches;
      if (lt.sigma->data[t] != oracle::window_sigma_at(series, t, cfg.long_term_window, 1, 1.0)) ++mismatches;
      if (se.mu->data[t] != oracle::window_mean_at(series, t, w, dil)) ++mismatches;
      if (se.sigma->data[t] != oracle::window_sigma_at(series, t, w, dil, 1.0)) ++mismatches;
      if (st.mu->data[t] != oracle::window_mean_at(series, t, w, 1)) ++mismatches;
      if (st.sigma->data[t] != oracle::window_sigma_at(series, t, w, 1, 1.0)) ++mismatches;
    }
  }
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 2 + static_cast<int>(rng.bounded(7));
    const int t_len = 2 + static_cast<int>(rng.bounded(15));
    const int c = 1 + static_cast<int>(rng.bounded(4));
    scnn::DecoupleConfig cfg;
    cfg.n_vars = n;
    cfg.channels = c;
    cfg.long_term_window = t_len;
    cfg.cycle_length = 1;
    cfg.season_window = 1;
    cfg.short_term_window = 1;
    cfg.validate(t_len);
    std::vector<double> z3 = oracle::random_vector(rng, n * t_len * c, 1.5);
    std::vector<double> logits = oracle::random_vector(rng, n * n);
    scnn::NoGradGuard guard;
    auto ce = scnn::coevolving_layer(scnn::tensor({n, t_len, c}, z3),
                                     scnn::tensor({n, n}, logits), cfg);
    for (int i = 0; i < n; ++i) {
      std::vector<double> row(logits.begin() + i * n, logits.begin() + (i + 1) * n);
      auto weights = oracle::softmax_row(row);
      for (int t = 0; t < t_len; ++t) {
        for (int ch = 0; ch < c; ++ch) {
          std::vector<double> col(n);
          for (int j = 0; j < n; ++j) col[j] = z3[(j * t_len + t) * c + ch];
          const std::size_t idx = (static_cast<std::size_t>(i) * t_len + t) * c + ch;
          compared += 2;
          if (ce.mu->data[idx] != oracle::weighted_mean(weights, col)) ++mismatches;
          if (ce.sigma->data[idx] != oracle::weighted_sigma(weights, col, 1.0)) ++mismatches;
        }
      }
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "%lld values compared bit-for-bit, %lld mismatches", compared,
                mismatches);
  return {mismatches == 0, buf};
}

// ---- 4: parameter count independent of the input length ------------------

Outcome check_count_invariance() {
  scnn::ModelConfig cfg;
  cfg.n_vars = 16;
  cfg.horizons = 3;
  cfg.cycle_length = 24;
  std::vector<long long> counts;
  for (int t_in : {72, 144, 288}) {
    cfg.input_steps = t_in;
    cfg.validate();
    counts.push_back(scnn::Model(cfg, 1).count_parameters());
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "counts %lld / %lld / %lld for 72/144/288 input steps",
                counts[0], counts[1], counts[2]);
  return {counts[0] == counts[1] && counts[1] == counts[2], buf};
}

// ---- shared helpers for the training-based checks ------------------------

scnn::SynthSpec benchmark_spec(std::uint64_t seed) {
  scnn::SynthSpec spec;
  spec.n_vars = 16;
  spec.t_steps = 4000;
  spec.cycle_length = 24;
  spec.seed = seed;
  spec.base_level = 5.0;
  spec.lt_amp = 1.0;
  spec.lt_timescale = 200.0;
  spec.lt_sigma_scale = 0.1;
  spec.se_amp = 1.2;
  spec.se_sigma_scale = 0.05;
  spec.st_shock_rate = 0.02;
  spec.st_shock_mag = 1.5;
  spec.st_shock_duration = 6;
  spec.st_sigma_scale = 0.05;
  spec.ce_groups = 4;
  spec.ce_shock_rate = 0.01;
  spec.ce_shock_mag = 1.0;
  spec.ce_shock_duration = 4;
  spec.ce_sigma_scale = 0.05;
  spec.residual_std = 0.7;
  return spec;
}

scnn::ModelConfig benchmark_model(int n_vars, int t_in, int t_out) {
  scnn::ModelConfig cfg;
  cfg.n_vars = n_vars;
  cfg.input_steps = t_in;
  cfg.horizons = t_out;
  cfg.cycle_length = 24;
  cfg.validate();
  return cfg;
}

double h1_mae(const scnn::EvalReport& report) { return report.horizons.at(0).mae; }

// ---- 5: accuracy against the reference predictors ------------------------

Outcome check_accuracy() {
  const auto start = Clock::now();
  int wins = 0;
  std::string detail;
  for (int trial = 1; trial <= 5; ++trial) {
    auto spec = benchmark_spec(1000 + trial);
    auto gen = scnn::generate(spec);
    auto mc = benchmark_model(spec.n_vars, 48, 3);
    scnn::Model model(mc, 100 + trial);
    scnn::TrainConfig tc;
    tc.max_epochs = 4;
    tc.patience = 4;
    tc.seed = 200 + trial;
    scnn::fit(model, gen.series, tc);

    const auto split = scnn::split_windows(gen.series.t_steps, mc.input_steps, mc.horizons,
                                           tc.val_frac, tc.test_frac);
    const double ours = h1_mae(scnn::evaluate(model, gen.series, split.test));
    double best_ref = 1e300;
    for (auto kind : {scnn::Baseline::Persistence, scnn::Baseline::SeasonalPersistence,
                      scnn::Baseline::HistoricalMean}) {
      best_ref = std::min(best_ref, h1_mae(scnn::evaluate_baseline(
                                        kind, gen.series, split.test, mc.input_steps, mc.horizons,
                                        mc.cycle_length)));
    }
    const bool win = ours <= 0.85 * best_ref;
    wins += win ? 1 : 0;
    char buf[120];
    std::snprintf(buf, sizeof buf, "%strial %d: model %.4f vs best reference %.4f (%s)",
                  trial == 1 ? "" : "; ", trial, ours, best_ref, win ? "ok" : "short");
    detail += buf;
  }
  const double elapsed = seconds_since(start);
  char buf[80];
  std::snprintf(buf, sizeof buf, "; %d/5 trials, %.0fs", wins, elapsed);
  detail += buf;
  return {wins >= 4 && elapsed < 900.0, detail};
}

// ---- 6: robustness to a mean shift over the evaluation span --------------

Outcome check_shift_robustness() {
  const auto start = Clock::now();
  int wins = 0;
  std::string detail;
  for (int trial = 1; trial <= 5; ++trial) {
    scnn::SynthSpec spec = benchmark_spec(3000 + trial);
    spec.n_vars = 8;
    spec.t_steps = 1500;
    spec.base_level = 8.0;
    spec.residual_std = 0.5;
    auto clean = scnn::generate(spec);
    spec.lt_ramp = 0.5;
    spec.lt_ramp_begin_frac = 0.85;
    auto ramped = scnn::generate(spec);

    auto mc = benchmark_model(spec.n_vars, 32, 2);
    scnn::Model model(mc, 300 + trial);
    scnn::TrainConfig tc;
    tc.max_epochs = 3;
    tc.patience = 3;
    tc.seed = 400 + trial;
    scnn::fit(model, clean.series, tc);

    const auto split = scnn::split_windows(spec.t_steps, mc.input_steps, mc.horizons, tc.val_frac,
                                           tc.test_frac);
    const double ours_clean = scnn::evaluate(model, clean.series, split.test).aggregate.mae;
    const double ours_ramp = scnn::evaluate(model, ramped.series, split.test).aggregate.mae;
    const auto sp = scnn::Baseline::SeasonalPersistence;
    const double ref_clean =
        scnn::evaluate_baseline(sp, clean.series, split.test, mc.input_steps, mc.horizons,
                                mc.cycle_length)
            .aggregate.mae;
    const double ref_ramp =
        scnn::evaluate_baseline(sp, ramped.series, split.test, mc.input_steps, mc.horizons,
                                mc.cycle_length)
            .aggregate.mae;
    const double ours_deg = ours_ramp - ours_clean;
    const double ref_deg = ref_ramp - ref_clean;
    const bool win = ours_deg < ref_deg;
    wins += win ? 1 : 0;
    char buf[140];
    std::snprintf(buf, sizeof buf, "%strial %d: model +%.4f vs reference +%.4f (%s)",
                  trial == 1 ? "" : "; ", trial, ours_deg, ref_deg, win ? "ok" : "short");
    detail += buf;
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "; %d/5 trials, %.0fs", wins, seconds_since(start));
  detail += buf;
  return {wins >= 4, detail};
}

// ---- 7: the structural loss term buys noise robustness -------------------

double masked_input_mae(const scnn::Model& model, const scnn::SeriesBatch& inputs,
                        const scnn::SeriesBatch& targets, const std::vector<long long>& origins) {
  const auto& mc = model.config();
  std::vector<double> window(static_cast<std::size_t>(mc.n_vars) * mc.input_steps);
  double abs_sum = 0.0;
  long long count = 0;
  for (long long t : origins) {
    for (int v = 0; v < mc.n_vars; ++v) {
      for (int s = 0; s < mc.input_steps; ++s) {
        window[static_cast<std::size_t>(v) * mc.input_steps + s] =
            inputs.at(v, t - mc.input_steps + 1 + s);
      }
    }
    const auto fc = model.forecast(window.data(), t);
    for (int v = 0; v < mc.n_vars; ++v) {
      for (int i = 1; i <= mc.horizons; ++i) {
        abs_sum += std::abs(targets.at(v, t + i) -
                            fc.mean[static_cast<std::size_t>(v) * mc.horizons + i - 1]);
        ++count;
      }
    }
  }
  return abs_sum / static_cast<double>(count);
}

Outcome check_noise_robustness() {
  const auto start = Clock::now();
  int wins = 0;
  std::string detail;
  for (int trial = 1; trial <= 5; ++trial) {
    scnn::SynthSpec spec = benchmark_spec(5000 + trial);
    spec.n_vars = 8;
    spec.t_steps = 1200;
    spec.residual_std = 0.6;
    auto gen = scnn::generate(spec);
    auto noisy = scnn::corrupt_gaussian(gen.series, 0.5, 6000 + trial);

    auto mc = benchmark_model(spec.n_vars, 32, 2);
    scnn::ModelConfig plain_mc = mc;
    plain_mc.aux_weight = 0.0;
    scnn::Model structured(mc, 500 + trial);
    scnn::Model plain(plain_mc, 500 + trial);
    scnn::TrainConfig tc;
    tc.max_epochs = 3;
    tc.patience = 3;
    tc.seed = 600 + trial;
    scnn::fit(structured, gen.series, tc);
    scnn::fit(plain, gen.series, tc);

    const auto split = scnn::split_windows(spec.t_steps, mc.input_steps, mc.horizons, tc.val_frac,
                                           tc.test_frac);
    const double s_clean = masked_input_mae(structured, gen.series, gen.series, split.test);
    const double s_noisy = masked_input_mae(structured, noisy, gen.series, split.test);
    const double p_clean = masked_input_mae(plain, gen.series, gen.series, split.test);
    const double p_noisy = masked_input_mae(plain, noisy, gen.series, split.test);
    const double s_deg = (s_noisy - s_clean) / s_clean;
    const double p_deg = (p_noisy - p_clean) / p_clean;
    const bool win = s_deg <= p_deg;
    wins += win ? 1 : 0;
    char buf[140];
    std::snprintf(buf, sizeof buf, "%strial %d: structured +%.2f%% vs plain +%.2f%% (%s)",
                  trial == 1 ? "" : "; ", trial, 100.0 * s_deg, 100.0 * p_deg,
                  win ? "ok" : "short");
    detail += buf;
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "; %d/5 trials, %.0fs", wins, seconds_since(start));
  detail += buf;
  return {wins >= 4, detail};
}

// ---- 8: streaming equivalence and flat per-push latency ------------------

Outcome check_streaming() {
  scnn::ModelConfig mc;
  mc.n_vars = 4;
  mc.input_steps = 32;
  mc.horizons = 2;
  mc.channels = 4;
  mc.blocks = 2;
  mc.cycle_length = 8;
  mc.validate();
  scnn::Model model(mc, 808);
  model.norm_mean = {0.0, 1.0, -1.0, 2.0};
  model.norm_std = {1.0, 2.0, 0.5, 1.5};

  scnn::StreamState exact;
  exact.init(&model, false);
  scnn::Rng rng(809);
  std::vector<double> history;
  std::vector<double> level(4, 0.0);
  double worst = 0.0;
  for (int step = 0; step < 500; ++step) {
    double obs[4];
    for (int v = 0; v < 4; ++v) {
      level[static_cast<std::size_t>(v)] += 0.05 * rng.normal();
      obs[v] = level[static_cast<std::size_t>(v)] + model.norm_mean[static_cast<std::size_t>(v)];
    }
    history.insert(history.end(), obs, obs + 4);
    const auto fc = exact.push(obs);
    if (step + 1 < mc.input_steps) continue;
    std::vector<double> window(static_cast<std::size_t>(mc.n_vars) * mc.input_steps);
    for (int v = 0; v < mc.n_vars; ++v) {
      for (int s = 0; s < mc.input_steps; ++s) {
        window[static_cast<std::size_t>(v) * mc.input_steps + s] =
            history[static_cast<std::size_t>(step + 1 - mc.input_steps + s) * 4 + v];
      }
    }
    const auto want = model.forecast(window.data(), step);
    for (std::size_t i = 0; i < want.mean.size(); ++i) {
      worst = std::max(worst, std::abs(fc.mean[i] - want.mean[i]));
      worst = std::max(worst, std::abs(fc.std[i] - want.std[i]));
    }
  }

  scnn::StreamState smoothed;
  smoothed.init(&model, true);
  std::vector<double> per_push(4096, 0.0);
  scnn::Rng lat_rng(810);
  for (int step = 0; step < 4096; ++step) {
    double obs[4];
    for (int v = 0; v < 4; ++v) obs[v] = lat_rng.normal();
    const auto t0 = Clock::now();
    smoothed.push(obs);
    per_push[static_cast<std::size_t>(step)] = seconds_since(t0);
  }
  auto block_mean = [&](int lo, int hi) {
    double sum = 0.0;
    for (int i = lo; i < hi; ++i) sum += per_push[static_cast<std::size_t>(i)];
    return sum / static_cast<double>(hi - lo);
  };
  const double early = block_mean(128, 256);
  const double late = block_mean(3968, 4096);
  const double ratio = late / early;

  char buf[200];
  std::snprintf(buf, sizeof buf,
                "replay max |err| %.3g; push %.1fus early vs %.1fus late (ratio %.2f)", worst,
                1e6 * early, 1e6 * late, ratio);
  return {worst <= 1e-9 && ratio <= 1.5, buf};
}

// ---- 9: likelihood loss identities ---------------------------------------

Outcome check_loss_identities() {
  scnn::DistNodes f;
  f.mean = scnn::tensor({1, 1}, {0.0});
  f.std = scnn::tensor({1, 1}, {1.0});
  const double unit_loss = scnn::mle_loss({2.0}, f)->value();

  auto sigma = scnn::variable({1, 1}, {2.0});
  scnn::DistNodes g;
  g.mean = scnn::tensor({1, 1}, {0.0});
  g.std = sigma;
  scnn::backward(scnn::mle_loss({2.0}, g));
  const double grad = sigma->grad[0];

  char buf[120];
  std::snprintf(buf, sizeof buf, "loss(e=2, scale=1) = %.17g, scale gradient at |e| = %.3g",
                unit_loss, grad);
  return {unit_loss == 2.0 && std::abs(grad) <= 1e-8, buf};
}

// ---- 10: checkpoint round trip is bit exact ------------------------------

Outcome check_checkpoint() {
  scnn::ModelConfig mc;
  mc.n_vars = 3;
  mc.input_steps = 24;
  mc.horizons = 3;
  mc.channels = 4;
  mc.blocks = 2;
  mc.cycle_length = 6;
  mc.validate();
  scnn::Model model(mc, 4242);
  model.norm_mean = {0.25, -1.5, 3.0};
  model.norm_std = {1.25, 0.75, 2.0};
  scnn::Rng rng(4243);
  std::vector<double> window =
      oracle::random_vector(rng, static_cast<std::size_t>(mc.n_vars) * mc.input_steps, 2.0);
  const auto before = model.forecast(window.data(), 23);

  const std::string path = "acceptance_roundtrip.ckpt";
  model.save(path);
  scnn::Model loaded = scnn::Model::load(path);
  std::remove(path.c_str());
  const auto after = loaded.forecast(window.data(), 23);

  bool identical = before.mean.size() == after.mean.size() && before.std.size() == after.std.size();
  for (std::size_t i = 0; identical && i < before.mean.size(); ++i) {
    identical = before.mean[i] == after.mean[i] && before.std[i] == after.std[i];
  }
  for (std::size_t i = 0; identical && i < model.params().size(); ++i) {
    identical = model.params()[i].node->data == loaded.params()[i].node->data;
  }
  return {identical, identical ? "forecasts and parameters identical after reload"
                               : "reloaded forecast differs"};
}

}  // namespace

int main() {
  struct Entry {
    const char* name;
    Outcome (*fn)();
  };
  const Entry entries[] = {
      {"decoupling reconstructs its input", check_reconstruction},
      {"gradients match central differences", check_gradients_full},
      {"windowed statistics match naive oracles", check_window_oracles},
      {"parameter count ignores input length", check_count_invariance},
      {"beats reference predictors on layered data", check_accuracy},
      {"degrades less than phase copying under mean shift", check_shift_robustness},
      {"structural loss term limits noise damage", check_noise_robustness},
      {"streaming replays batch forecasts at flat cost", check_streaming},
      {"likelihood identities hold", check_loss_identities},
      {"checkpoints reload bit-exactly", check_checkpoint},
  };
  int failures = 0;
  int index = 0;
  for (const auto& entry : entries) {
    ++index;
    Outcome out;
    try {
      out = entry.fn();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%2d] %s: %s\n     %s\n", index, out.pass ? "PASS" : "FAIL", entry.name,
                out.detail.c_str());
    std::fflush(stdout);
    failures += out.pass ? 0 : 1;
  }
  if (failures > 0) {
    std::printf("%d of 10 checks failed\n", failures);
    return 1;
  }
  std::printf("all 10 checks passed\n");
  return 0;
}
