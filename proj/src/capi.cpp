#include "scnn.h"

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "config.hpp"
#include "data.hpp"
#include "network.hpp"
#include "stream.hpp"
#include "train.hpp"

struct scnn_config {
  scnn::RunConfig run;
};

struct scnn_dataset {
  scnn::SeriesBatch batch;
};

struct scnn_model {
  scnn::Model model;
};

struct scnn_stream {
  scnn::StreamState state;
  const scnn_model* owner;
};

namespace {

thread_local std::string g_last_error;

template <typename Fn>
int wrap(Fn&& fn) {
  try {
    fn();
    return 0;
  } catch (const scnn::Error& e) {
    g_last_error = e.what();
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return 2;
  }
}

// Guards every entry point against null handles and null required pointers
// so misuse surfaces as a status code instead of a crash.
void require(const void* ptr, const char* what) {
  if (!ptr) scnn::fail_usage(std::string(what) + " must not be null");
}

scnn::ModelConfig model_config_of(const scnn_config* cfg) { return cfg->run.model; }

std::vector<long long> origins_for(const scnn::SeriesBatch& data, const scnn::ModelConfig& mc,
                                   double val_frac, double test_frac, const std::string& split) {
  if (split == "all") return scnn::make_windows(data.t_steps, mc.input_steps, mc.horizons);
  const scnn::WindowSplit ws =
      scnn::split_windows(data.t_steps, mc.input_steps, mc.horizons, val_frac, test_frac);
  if (split == "train") return ws.train;
  if (split == "val") return ws.val;
  if (split == "test") return ws.test;
  scnn::fail_usage("unknown split '" + split + "' (expected train, val, test, or all)");
}

}  // namespace

extern "C" {

const char* scnn_last_error(void) { return g_last_error.c_str(); }

void scnn_string_free(char* s) { delete[] s; }

int scnn_config_create(scnn_config** out) {
  return wrap([&] {
    require(out, "out");
    *out = new scnn_config();
  });
}

int scnn_config_load(const char* path, scnn_config** out) {
  return wrap([&] {
    require(path, "path");
    require(out, "out");
    *out = new scnn_config{scnn::load_run_config(path)};
  });
}

int scnn_config_override(scnn_config* cfg, const char* assignment) {
  return wrap([&] {
    require(cfg, "config");
    require(assignment, "assignment");
    scnn::apply_override(cfg->run, assignment);
  });
}

int scnn_config_write_resolved(const scnn_config* cfg, const char* path) {
  return wrap([&] {
    require(cfg, "config");
    require(path, "path");
    std::ofstream out(path);
    if (!out) scnn::fail_data(std::string("cannot write ") + path);
    scnn::write_resolved_config(cfg->run, out);
  });
}

int scnn_config_get(const scnn_config* cfg, const char* section_key, char** out_value) {
  return wrap([&] {
    require(cfg, "config");
    require(section_key, "section_key");
    require(out_value, "out_value");
    const std::string wanted(section_key);
    const std::size_t dot = wanted.find('.');
    if (dot == std::string::npos) {
      scnn::fail_usage("config get: expected section.key, got '" + wanted + "'");
    }
    std::ostringstream text;
    scnn::write_resolved_config(cfg->run, text);
    std::istringstream in(text.str());
    std::string line;
    std::string section;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (line.front() == '[') {
        section = line.substr(1, line.size() - 2);
        continue;
      }
      const std::size_t eq = line.find(" = ");
      if (eq == std::string::npos) continue;
      if (section == wanted.substr(0, dot) && line.substr(0, eq) == wanted.substr(dot + 1)) {
        const std::string value = line.substr(eq + 3);
        *out_value = new char[value.size() + 1];
        std::memcpy(*out_value, value.c_str(), value.size() + 1);
        return;
      }
    }
    scnn::fail_usage("config get: unknown key '" + wanted + "'");
  });
}

void scnn_config_free(scnn_config* cfg) { delete cfg; }

int scnn_generate_files(const scnn_config* cfg, const char* dir, const char* basename) {
  return wrap([&] {
    require(cfg, "config");
    require(dir, "dir");
    require(basename, "basename");
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const scnn::Generated gen = scnn::generate(cfg->run.data);
    scnn::save_csv(gen.series, (fs::path(dir) / (std::string(basename) + ".csv")).string());
    scnn::save_truth_csvs(gen, dir, basename);
  });
}

int scnn_dataset_load(const char* path, scnn_dataset** out) {
  return wrap([&] {
    require(path, "path");
    require(out, "out");
    *out = new scnn_dataset{scnn::load_csv(path)};
  });
}

int scnn_dataset_save(const scnn_dataset* data, const char* path) {
  return wrap([&] {
    require(data, "dataset");
    require(path, "path");
    scnn::save_csv(data->batch, path);
  });
}

int scnn_dataset_shape(const scnn_dataset* data, int* n_vars, int64_t* t_steps, int64_t* t0) {
  return wrap([&] {
    require(data, "dataset");
    require(n_vars, "n_vars");
    require(t_steps, "t_steps");
    require(t0, "t0");
    if (n_vars) *n_vars = data->batch.n_vars;
    if (t_steps) *t_steps = data->batch.t_steps;
    if (t0) *t0 = data->batch.t0;
  });
}

int scnn_dataset_corrupt_gaussian(const scnn_dataset* data, double sigma, uint64_t seed,
                                  scnn_dataset** out) {
  return wrap([&] {
    require(data, "dataset");
    require(out, "out");
    *out = new scnn_dataset{scnn::corrupt_gaussian(data->batch, sigma, seed)};
  });
}

int scnn_dataset_corrupt_missing(const scnn_dataset* data, double rate, uint64_t seed,
                                 scnn_dataset** out) {
  return wrap([&] {
    require(data, "dataset");
    require(out, "out");
    *out = new scnn_dataset{scnn::corrupt_missing(data->batch, rate, seed)};
  });
}

int scnn_dataset_detect_cycle(const scnn_dataset* data, int max_period, int* period,
                              double* peak) {
  return wrap([&] {
    require(data, "dataset");
    require(period, "period");
    require(peak, "peak");
    const scnn::CycleDetection det = scnn::detect_cycle(data->batch, max_period);
    if (period) *period = det.period;
    if (peak) *peak = det.peak;
  });
}

void scnn_dataset_free(scnn_dataset* data) { delete data; }

int scnn_model_create(const scnn_config* cfg, uint64_t init_seed, scnn_model** out) {
  return wrap([&] {
    require(cfg, "config");
    require(out, "out");
    *out = new scnn_model{scnn::Model(model_config_of(cfg), init_seed)};
  });
}

int scnn_model_load(const char* path, scnn_model** out) {
  return wrap([&] {
    require(path, "path");
    require(out, "out");
    *out = new scnn_model{scnn::Model::load(path)};
  });
}

int scnn_model_save(const scnn_model* model, const char* path) {
  return wrap([&] {
    require(model, "model");
    require(path, "path");
    model->model.save(path);
  });
}

int scnn_model_shape(const scnn_model* model, int* n_vars, int* input_steps, int* horizons,
                     int* cycle_length) {
  return wrap([&] {
    require(model, "model");
    const scnn::ModelConfig& mc = model->model.config();
    if (n_vars) *n_vars = mc.n_vars;
    if (input_steps) *input_steps = mc.input_steps;
    if (horizons) *horizons = mc.horizons;
    if (cycle_length) *cycle_length = mc.cycle_length;
  });
}

int scnn_model_param_count(const scnn_model* model, int64_t* out) {
  return wrap([&] {
    require(model, "model");
    require(out, "out");
    *out = model->model.count_parameters();
  });
}

int scnn_model_train(scnn_model* model, const scnn_dataset* data, const scnn_config* cfg,
                     const char* loss_curve_path, int* best_epoch, double* best_val) {
  return wrap([&] {
    require(model, "model");
    require(data, "dataset");
    require(cfg, "config");
    const scnn::FitResult fit = scnn::fit(model->model, data->batch, cfg->run.train);
    if (loss_curve_path) {
      std::ofstream out(loss_curve_path);
      if (!out) scnn::fail_data(std::string("cannot write ") + loss_curve_path);
      scnn::write_loss_curve(fit, out);
    }
    if (best_epoch) *best_epoch = fit.best_epoch;
    if (best_val) *best_val = fit.best_val;
  });
}

int scnn_model_evaluate(const scnn_model* model, const scnn_dataset* data, double val_frac,
                        double test_frac, const char* split, const char* baseline,
                        char** out_csv) {
  return wrap([&] {
    require(model, "model");
    require(data, "dataset");
    require(split, "split");
    require(out_csv, "out_csv");
    const scnn::ModelConfig& mc = model->model.config();
    if (data->batch.n_vars != mc.n_vars) {
      scnn::fail_data("evaluate: data has " + std::to_string(data->batch.n_vars) +
                      " variables but the checkpoint wants " + std::to_string(mc.n_vars));
    }
    const std::vector<long long> origins =
        origins_for(data->batch, mc, val_frac, test_frac, split ? split : "test");
    if (origins.empty()) scnn::fail_data("evaluate: the chosen split holds no window");
    scnn::EvalReport report;
    if (baseline) {
      report = scnn::evaluate_baseline(scnn::baseline_from_string(baseline), data->batch, origins,
                                       mc.input_steps, mc.horizons, mc.cycle_length);
    } else {
      report = scnn::evaluate(model->model, data->batch, origins);
    }
    std::ostringstream text;
    scnn::write_eval_csv(report, text);
    const std::string s = text.str();
    *out_csv = new char[s.size() + 1];
    std::memcpy(*out_csv, s.c_str(), s.size() + 1);
  });
}

int scnn_model_forecast(const scnn_model* model, const scnn_dataset* data, int64_t at,
                        double* mean, double* std) {
  return wrap([&] {
    require(model, "model");
    require(data, "dataset");
    require(mean, "mean");
    require(std, "std");
    const scnn::ModelConfig& mc = model->model.config();
    const scnn::SeriesBatch& batch = data->batch;
    if (batch.n_vars != mc.n_vars) {
      scnn::fail_data("forecast: data has " + std::to_string(batch.n_vars) +
                      " variables but the checkpoint wants " + std::to_string(mc.n_vars));
    }
    const long long idx = at - batch.t0;
    if (idx < mc.input_steps - 1 || idx >= batch.t_steps) {
      scnn::fail_data("forecast: origin " + std::to_string(at) + " needs the " +
                      std::to_string(mc.input_steps) + "-step window inside times " +
                      std::to_string(batch.t0) + ".." +
                      std::to_string(batch.t0 + batch.t_steps - 1));
    }
    std::vector<double> window(static_cast<std::size_t>(mc.n_vars) * mc.input_steps);
    for (int v = 0; v < mc.n_vars; ++v) {
      const double* row = batch.row(v);
      for (int s = 0; s < mc.input_steps; ++s) {
        window[static_cast<std::size_t>(v) * mc.input_steps + s] =
            row[idx - mc.input_steps + 1 + s];
      }
    }
    const scnn::ForecastDistribution f = model->model.forecast(window.data(), at);
    const std::size_t count = static_cast<std::size_t>(mc.n_vars) * mc.horizons;
    if (mean) std::memcpy(mean, f.mean.data(), count * sizeof(double));
    if (std) std::memcpy(std, f.std.data(), count * sizeof(double));
  });
}

int scnn_model_decompose(const scnn_model* model, const scnn_dataset* data, int layer,
                         const char* dir, const char* basename) {
  return wrap([&] {
    require(model, "model");
    require(data, "dataset");
    require(dir, "dir");
    require(basename, "basename");
    namespace fs = std::filesystem;
    const scnn::ModelConfig& mc = model->model.config();
    const scnn::SeriesBatch& batch = data->batch;
    if (batch.n_vars != mc.n_vars) {
      scnn::fail_data("decompose: data has " + std::to_string(batch.n_vars) +
                      " variables but the checkpoint wants " + std::to_string(mc.n_vars));
    }
    if (layer < 0 || layer >= mc.blocks) {
      scnn::fail_usage("decompose: layer " + std::to_string(layer) + " outside 0.." +
                       std::to_string(mc.blocks - 1));
    }
    fs::create_directories(dir);
    const std::size_t count = batch.values.size();
    std::vector<double> std_series(count);
    model->model.standardize(batch.values.data(), std_series.data(), count);
    scnn::NoGradGuard guard;
    const scnn::StackOut stack =
        model->model.run_stack(std_series.data(), static_cast<int>(batch.t_steps));
    const scnn::DecoupleOut& block = stack.blocks[static_cast<std::size_t>(layer)];
    const struct {
      const char* name;
      const scnn::NodePtr& node;
    } traces[] = {
        {"mu_lt", block.components.mu_lt},       {"sigma_lt", block.components.sigma_lt},
        {"mu_se", block.components.mu_se},       {"sigma_se", block.components.sigma_se},
        {"mu_st", block.components.mu_st},       {"sigma_st", block.components.sigma_st},
        {"mu_ce", block.components.mu_ce},       {"sigma_ce", block.components.sigma_ce},
        {"z1", block.residuals.z1},              {"z2", block.residuals.z2},
        {"z3", block.residuals.z3},              {"z4", block.residuals.z4},
    };
    for (const auto& tr : traces) {
      scnn::SeriesBatch out;
      out.n_vars = batch.n_vars;
      out.t_steps = batch.t_steps;
      out.t0 = batch.t0;
      out.var_names = batch.var_names;
      out.cycle_hint = batch.cycle_hint;
      out.values.resize(count);
      out.observed.assign(count, 1);
      const int c = mc.channels;
      const double* vals = tr.node->data.data();
      for (int v = 0; v < batch.n_vars; ++v) {
        for (long long t = 0; t < batch.t_steps; ++t) {
          const double* cell =
              vals + (static_cast<std::size_t>(v) * batch.t_steps + t) * c;
          out.values[static_cast<std::size_t>(v) * batch.t_steps + t] =
              std::accumulate(cell, cell + c, 0.0) / c;
        }
      }
      const std::string name =
          std::string(basename) + ".block" + std::to_string(layer) + "." + tr.name + ".csv";
      scnn::save_csv(out, (fs::path(dir) / name).string());
    }
  });
}

int scnn_model_explain(const scnn_model* model, const char* dir, const char* basename) {
  return wrap([&] {
    require(model, "model");
    require(dir, "dir");
    require(basename, "basename");
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const scnn::ModelConfig& mc = model->model.config();
    const scnn::ExtrapParams& ep = model->model.extrap_params();
    const struct {
      const char* name;
      const scnn::ARExtrapolator& ar;
    } streams[] = {
        {"z1", ep.z1},           {"z2", ep.z2},           {"z3", ep.z3},
        {"z4", ep.z4},           {"mu_st", ep.mu_st},     {"sigma_st", ep.sigma_st},
        {"mu_ce", ep.mu_ce},     {"sigma_ce", ep.sigma_ce},
    };
    for (const auto& st : streams) {
      const std::vector<double> matrix = scnn::contribution_matrix(st.ar);
      scnn::SeriesBatch out;
      out.n_vars = mc.short_term_window;
      out.t_steps = mc.horizons;
      out.t0 = 1;  // row i holds horizon i
      for (int j = 0; j < mc.short_term_window; ++j) {
        out.var_names.push_back("lag_" + std::to_string(j));
      }
      out.values.resize(matrix.size());
      out.observed.assign(matrix.size(), 1);
      for (int i = 0; i < mc.horizons; ++i) {
        for (int j = 0; j < mc.short_term_window; ++j) {
          out.values[static_cast<std::size_t>(j) * mc.horizons + i] =
              matrix[static_cast<std::size_t>(i) * mc.short_term_window + j];
        }
      }
      const std::string name = std::string(basename) + "." + st.name + ".contribution.csv";
      scnn::save_csv(out, (fs::path(dir) / name).string());
    }
  });
}

int scnn_model_bench(scnn_model* model, const scnn_dataset* data, int samples, double* train_ms,
                     double* infer_ms) {
  return wrap([&] {
    require(model, "model");
    require(data, "dataset");
    require(train_ms, "train_ms");
    require(infer_ms, "infer_ms");
    using clock = std::chrono::steady_clock;
    scnn::Model& m = model->model;
    const scnn::ModelConfig& mc = m.config();
    const scnn::SeriesBatch& batch = data->batch;
    if (batch.n_vars != mc.n_vars) {
      scnn::fail_data("bench: data has " + std::to_string(batch.n_vars) +
                      " variables but the checkpoint wants " + std::to_string(mc.n_vars));
    }
    if (samples < 1) scnn::fail_usage("bench: samples must be positive");
    std::vector<long long> origins =
        scnn::make_windows(batch.t_steps, mc.input_steps, mc.horizons);
    if (origins.empty()) scnn::fail_data("bench: no window fits the series");
    if (static_cast<int>(origins.size()) > samples) origins.resize(samples);

    scnn::SeriesBatch std_data = batch;
    const scnn::Standardizer scaler = scnn::Standardizer::fit(std_data, std_data.t_steps);
    scaler.transform(std_data);

    std::vector<std::vector<double>> snapshot;
    for (const auto& p : m.params()) snapshot.push_back(p.node->data);

    std::vector<double> window(static_cast<std::size_t>(mc.n_vars) * mc.input_steps);
    std::vector<double> targets(static_cast<std::size_t>(mc.n_vars) * mc.horizons);
    const auto fill = [&](long long origin) {
      for (int v = 0; v < mc.n_vars; ++v) {
        const double* row = std_data.row(v);
        for (int s = 0; s < mc.input_steps; ++s) {
          window[static_cast<std::size_t>(v) * mc.input_steps + s] =
              row[origin - mc.input_steps + 1 + s];
        }
        for (int i = 0; i < mc.horizons; ++i) {
          targets[static_cast<std::size_t>(v) * mc.horizons + i] = row[origin + 1 + i];
        }
      }
    };

    const auto t0 = clock::now();
    for (long long origin : origins) {
      fill(origin);
      scnn::zero_grad(m.params());
      scnn::Model::GraphOut out = m.build_forward(window.data(), mc.aux_weight > 0.0);
      const scnn::NodePtr loss = scnn::total_loss(targets, out.main, out.aux, mc.aux_weight,
                                                  mc.loss_mode, mc.aux_loss_mode);
      scnn::backward(loss);
      scnn::adam_step(m.params(), 1e-4, 0.9, 0.999, 1e-8);
    }
    const auto t1 = clock::now();
    for (long long origin : origins) {
      fill(origin);
      scnn::NoGradGuard guard;
      m.build_forward(window.data(), false);
    }
    const auto t2 = clock::now();

    for (std::size_t i = 0; i < snapshot.size(); ++i) {
      m.params()[i].node->data = snapshot[i];
      m.params()[i].m.clear();
      m.params()[i].v.clear();
      m.params()[i].steps = 0;
    }
    const double n = static_cast<double>(origins.size());
    if (train_ms) {
      *train_ms = std::chrono::duration<double, std::milli>(t1 - t0).count() / n;
    }
    if (infer_ms) {
      *infer_ms = std::chrono::duration<double, std::milli>(t2 - t1).count() / n;
    }
  });
}

void scnn_model_free(scnn_model* model) { delete model; }

int scnn_stream_create(const scnn_model* model, int ema, scnn_stream** out) {
  return wrap([&] {
    require(model, "model");
    require(out, "out");
    auto* s = new scnn_stream{scnn::StreamState{}, model};
    s->state.init(&model->model, ema != 0);
    *out = s;
  });
}

int scnn_stream_push(scnn_stream* stream, const double* obs, double* mean, double* std) {
  return wrap([&] {
    require(stream, "stream");
    require(obs, "obs");
    require(mean, "mean");
    require(std, "std");
    const scnn::ForecastDistribution f = stream->state.push(obs);
    const std::size_t count = static_cast<std::size_t>(f.n_vars) * f.horizons;
    if (mean) std::memcpy(mean, f.mean.data(), count * sizeof(double));
    if (std) std::memcpy(std, f.std.data(), count * sizeof(double));
  });
}

void scnn_stream_free(scnn_stream* stream) { delete stream; }

}  // extern "C"
