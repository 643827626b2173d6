#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "scnn.h"

namespace {

[[noreturn]] void die(int code) {
  std::cerr << "ERROR " << code << ": " << scnn_last_error() << '\n';
  std::exit(code);
}

void check(int code) {
  if (code != 0) die(code);
}

struct ConfigHandle {
  scnn_config* ptr = nullptr;
  ~ConfigHandle() { scnn_config_free(ptr); }
};

struct DatasetHandle {
  scnn_dataset* ptr = nullptr;
  ~DatasetHandle() { scnn_dataset_free(ptr); }
};

struct ModelHandle {
  scnn_model* ptr = nullptr;
  ~ModelHandle() { scnn_model_free(ptr); }
};

struct StreamHandle {
  scnn_stream* ptr = nullptr;
  ~StreamHandle() { scnn_stream_free(ptr); }
};

void load_config(ConfigHandle& cfg, const std::string& path,
                 const std::vector<std::string>& sets) {
  if (path.empty()) {
    check(scnn_config_create(&cfg.ptr));
  } else {
    check(scnn_config_load(path.c_str(), &cfg.ptr));
  }
  for (const std::string& s : sets) check(scnn_config_override(cfg.ptr, s.c_str()));
}

std::string config_value(const scnn_config* cfg, const char* key) {
  char* value = nullptr;
  check(scnn_config_get(cfg, key, &value));
  std::string out(value);
  scnn_string_free(value);
  return out;
}

uint64_t parse_u64(const std::string& s) { return std::strtoull(s.c_str(), nullptr, 10); }

void print_forecast_rows(int64_t origin_t, int n_vars, int horizons, const double* mean,
                         const double* std) {
  char buf[96];
  for (int v = 0; v < n_vars; ++v) {
    for (int i = 0; i < horizons; ++i) {
      const size_t at = static_cast<size_t>(v) * horizons + i;
      std::snprintf(buf, sizeof buf, "%" PRId64 ",%d,%d,%.17g,%.17g", origin_t, v, i + 1,
                    mean[at], std[at]);
      std::cout << buf << '\n';
    }
  }
}

int run_stream(const std::string& model_path, bool ema) {
  ModelHandle model;
  check(scnn_model_load(model_path.c_str(), &model.ptr));
  int n_vars = 0;
  int horizons = 0;
  check(scnn_model_shape(model.ptr, &n_vars, nullptr, &horizons, nullptr));
  StreamHandle stream;
  check(scnn_stream_create(model.ptr, ema ? 1 : 0, &stream.ptr));

  std::vector<double> obs(static_cast<size_t>(n_vars));
  std::vector<double> mean(static_cast<size_t>(n_vars) * horizons);
  std::vector<double> std_out(static_cast<size_t>(n_vars) * horizons);
  std::string line;
  size_t line_no = 0;
  std::cout << "t,var,horizon,mean,std\n";
  while (std::getline(std::cin, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const char* p = line.c_str();
    char* end = nullptr;
    const long long t = std::strtoll(p, &end, 10);
    int fields = 0;
    while (*end == ',' && fields < n_vars) {
      p = end + 1;
      obs[static_cast<size_t>(fields)] = std::strtod(p, &end);
      if (end == p) break;
      ++fields;
    }
    if (fields != n_vars || *end != '\0') {
      std::cerr << "ERROR 2: stream input line " << line_no << ": expected t plus " << n_vars
                << " values, got '" << line << "'\n";
      return 2;
    }
    check(scnn_stream_push(stream.ptr, obs.data(), mean.data(), std_out.data()));
    print_forecast_rows(t, n_vars, horizons, mean.data(), std_out.data());
    std::cout.flush();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structured-component multivariate time-series forecaster"};
  app.require_subcommand(1);

  std::string cfg_path;
  std::string data_path;
  std::string model_path;
  std::string out_dir;
  std::string name = "data";
  std::vector<std::string> sets;

  auto* gen = app.add_subcommand("generate", "Synthesize a dataset plus ground-truth factors");
  gen->add_option("--spec", cfg_path, "Config file ([data] section drives the generator)");
  gen->add_option("--out", out_dir, "Output directory")->required();
  gen->add_option("--name", name, "Basename of the emitted files");
  gen->add_option("--set", sets, "Override, e.g. data.seed=9");

  auto* train = app.add_subcommand("train", "Fit a model on a data CSV");
  train->add_option("--config", cfg_path, "Config file");
  train->add_option("--data", data_path, "Training data CSV")->required();
  train->add_option("--out", out_dir, "Output directory")->required();
  train->add_option("--set", sets, "Override, e.g. train.lr=0.001");

  std::string split = "test";
  std::string baseline;
  auto* eval = app.add_subcommand("evaluate", "Metrics CSV on a chosen split");
  eval->add_option("--model", model_path, "Checkpoint path")->required();
  eval->add_option("--data", data_path, "Data CSV")->required();
  eval->add_option("--config", cfg_path, "Config file (split fractions)");
  eval->add_option("--split", split, "train, val, test, or all");
  eval->add_option("--baseline", baseline,
                   "Evaluate persistence, seasonal_persistence, or historical_mean instead");
  eval->add_option("--set", sets, "Override, e.g. train.test_frac=0.2");

  int64_t at = 0;
  auto* fc = app.add_subcommand("forecast", "Forecast from one origin time");
  fc->add_option("--model", model_path, "Checkpoint path")->required();
  fc->add_option("--data", data_path, "Data CSV")->required();
  fc->add_option("--at", at, "Origin time (the input window ends here)")->required();

  int layer = 0;
  auto* dec = app.add_subcommand("decompose", "Per-component channel-mean traces of one block");
  dec->add_option("--model", model_path, "Checkpoint path")->required();
  dec->add_option("--data", data_path, "Data CSV")->required();
  dec->add_option("--layer", layer, "Block index, 0-based");
  dec->add_option("--out", out_dir, "Output directory")->required();
  dec->add_option("--name", name, "Basename of the emitted files");

  auto* exp = app.add_subcommand("explain", "Lag-contribution matrices of the extrapolators");
  exp->add_option("--model", model_path, "Checkpoint path")->required();
  exp->add_option("--out", out_dir, "Output directory")->required();
  exp->add_option("--name", name, "Basename of the emitted files");

  std::string kind;
  uint64_t seed = 0;
  std::string out_file;
  auto* cor = app.add_subcommand("corrupt", "Noise or mask a data CSV");
  cor->add_option("--data", data_path, "Data CSV")->required();
  cor->add_option("--kind", kind, "gaussian:SIGMA or missing:RATE")->required();
  cor->add_option("--seed", seed, "Corruption seed");
  cor->add_option("--out", out_file, "Output CSV")->required();

  bool ema = false;
  auto* str = app.add_subcommand("stream", "Forecast per observation row on stdin");
  str->add_option("--model", model_path, "Checkpoint path")->required();
  str->add_flag("--ema", ema, "Moving-average component state instead of exact replay");

  int samples = 32;
  auto* bench = app.add_subcommand("bench", "Train-step and inference latencies");
  bench->add_option("--model", model_path, "Checkpoint path")->required();
  bench->add_option("--data", data_path, "Data CSV")->required();
  bench->add_option("--samples", samples, "Windows to time");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "ERROR 1: " << e.what() << '\n';
    return 1;
  }

  if (gen->parsed()) {
    ConfigHandle cfg;
    load_config(cfg, cfg_path, sets);
    check(scnn_generate_files(cfg.ptr, out_dir.c_str(), name.c_str()));
    check(scnn_config_write_resolved(cfg.ptr, (out_dir + "/resolved.ini").c_str()));
    std::cout << "wrote " << out_dir << "/" << name << ".csv\n";
    return 0;
  }

  if (train->parsed()) {
    ConfigHandle cfg;
    load_config(cfg, cfg_path, sets);
    std::filesystem::create_directories(out_dir);
    DatasetHandle data;
    check(scnn_dataset_load(data_path.c_str(), &data.ptr));
    ModelHandle model;
    check(scnn_model_create(cfg.ptr, parse_u64(config_value(cfg.ptr, "train.seed")), &model.ptr));
    int best_epoch = 0;
    double best_val = 0.0;
    check(scnn_model_train(model.ptr, data.ptr, cfg.ptr, (out_dir + "/loss_curve.csv").c_str(),
                           &best_epoch, &best_val));
    check(scnn_model_save(model.ptr, (out_dir + "/model.ckpt").c_str()));
    check(scnn_config_write_resolved(cfg.ptr, (out_dir + "/resolved.ini").c_str()));
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", best_val);
    std::cout << "best_epoch=" << best_epoch << " best_val=" << buf << '\n';
    std::cout << "wrote " << out_dir << "/model.ckpt\n";
    return 0;
  }

  if (eval->parsed()) {
    ConfigHandle cfg;
    load_config(cfg, cfg_path, sets);
    DatasetHandle data;
    check(scnn_dataset_load(data_path.c_str(), &data.ptr));
    ModelHandle model;
    check(scnn_model_load(model_path.c_str(), &model.ptr));
    const double val_frac = std::strtod(config_value(cfg.ptr, "train.val_frac").c_str(), nullptr);
    const double test_frac =
        std::strtod(config_value(cfg.ptr, "train.test_frac").c_str(), nullptr);
    char* csv = nullptr;
    check(scnn_model_evaluate(model.ptr, data.ptr, val_frac, test_frac, split.c_str(),
                              baseline.empty() ? nullptr : baseline.c_str(), &csv));
    std::cout << csv;
    scnn_string_free(csv);
    return 0;
  }

  if (fc->parsed()) {
    DatasetHandle data;
    check(scnn_dataset_load(data_path.c_str(), &data.ptr));
    ModelHandle model;
    check(scnn_model_load(model_path.c_str(), &model.ptr));
    int n_vars = 0;
    int horizons = 0;
    check(scnn_model_shape(model.ptr, &n_vars, nullptr, &horizons, nullptr));
    std::vector<double> mean(static_cast<size_t>(n_vars) * horizons);
    std::vector<double> std_out(static_cast<size_t>(n_vars) * horizons);
    check(scnn_model_forecast(model.ptr, data.ptr, at, mean.data(), std_out.data()));
    std::cout << "origin_t,var,horizon,mean,std\n";
    print_forecast_rows(at, n_vars, horizons, mean.data(), std_out.data());
    return 0;
  }

  if (dec->parsed()) {
    DatasetHandle data;
    check(scnn_dataset_load(data_path.c_str(), &data.ptr));
    ModelHandle model;
    check(scnn_model_load(model_path.c_str(), &model.ptr));
    check(scnn_model_decompose(model.ptr, data.ptr, layer, out_dir.c_str(), name.c_str()));
    std::cout << "wrote " << out_dir << "/" << name << ".block" << layer << ".*.csv\n";
    return 0;
  }

  if (exp->parsed()) {
    ModelHandle model;
    check(scnn_model_load(model_path.c_str(), &model.ptr));
    check(scnn_model_explain(model.ptr, out_dir.c_str(), name.c_str()));
    std::cout << "wrote " << out_dir << "/" << name << ".*.contribution.csv\n";
    return 0;
  }

  if (cor->parsed()) {
    DatasetHandle data;
    check(scnn_dataset_load(data_path.c_str(), &data.ptr));
    const size_t colon = kind.find(':');
    if (colon == std::string::npos) {
      std::cerr << "ERROR 1: --kind must look like gaussian:0.1 or missing:0.2\n";
      return 1;
    }
    const std::string what = kind.substr(0, colon);
    const double amount = std::strtod(kind.c_str() + colon + 1, nullptr);
    DatasetHandle corrupted;
    if (what == "gaussian") {
      check(scnn_dataset_corrupt_gaussian(data.ptr, amount, seed, &corrupted.ptr));
    } else if (what == "missing") {
      check(scnn_dataset_corrupt_missing(data.ptr, amount, seed, &corrupted.ptr));
    } else {
      std::cerr << "ERROR 1: unknown corruption '" << what << "'\n";
      return 1;
    }
    check(scnn_dataset_save(corrupted.ptr, out_file.c_str()));
    std::cout << "wrote " << out_file << '\n';
    return 0;
  }

  if (str->parsed()) return run_stream(model_path, ema);

  if (bench->parsed()) {
    DatasetHandle data;
    check(scnn_dataset_load(data_path.c_str(), &data.ptr));
    ModelHandle model;
    check(scnn_model_load(model_path.c_str(), &model.ptr));
    double train_ms = 0.0;
    double infer_ms = 0.0;
    check(scnn_model_bench(model.ptr, data.ptr, samples, &train_ms, &infer_ms));
    char buf[64];
    std::cout << "metric,ms_per_sample\n";
    std::snprintf(buf, sizeof buf, "train_step,%.6f", train_ms);
    std::cout << buf << '\n';
    std::snprintf(buf, sizeof buf, "inference,%.6f", infer_ms);
    std::cout << buf << '\n';
    return 0;
  }

  return 0;
}
