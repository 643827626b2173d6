#include "network.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rng.hpp"

namespace scnn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

LossMode loss_mode_from_string(const std::string& s) {
  if (s == "mle") return LossMode::Mle;
  if (s == "mse") return LossMode::Mse;
  fail_usage("unknown loss mode '" + s + "' (expected mle or mse)");
}

std::string to_string(LossMode mode) { return mode == LossMode::Mle ? "mle" : "mse"; }

int ModelConfig::resolved_season_window() const {
  if (season_window > 0) return season_window;
  return std::max(1, resolved_long_window() / cycle_length);
}

DecoupleConfig ModelConfig::decouple_config() const {
  DecoupleConfig d;
  d.n_vars = n_vars;
  d.channels = channels;
  d.long_term_window = resolved_long_window();
  d.cycle_length = cycle_length;
  d.season_window = resolved_season_window();
  d.short_term_window = short_term_window;
  d.variance_floor = variance_floor;
  return d;
}

ExtrapConfig ModelConfig::extrap_config() const {
  ExtrapConfig e;
  e.horizons = horizons;
  e.ar_lags = short_term_window;
  e.cycle_length = cycle_length;
  e.channels = channels;
  return e;
}

void ModelConfig::validate() const {
  if (n_vars < 1) fail_usage("model: n_vars must be positive");
  if (input_steps < 1) fail_usage("model: input_steps must be positive");
  if (horizons < 1) fail_usage("model: horizons must be positive");
  if (channels < 1) fail_usage("model: channels must be positive");
  if (blocks < 0) fail_usage("model: blocks must be non-negative");
  if (kernel < 1) fail_usage("model: kernel must be positive");
  if (cycle_length < 1) fail_usage("model: cycle_length must be positive");
  if (short_term_window < 1) fail_usage("model: short_term_window must be positive");
  if (variance_floor <= 0.0) fail_usage("model: variance_floor must be positive");
  if (aux_weight < 0.0) fail_usage("model: aux_weight must be non-negative");
  if (blocks > 0) {
    if (resolved_long_window() > input_steps) {
      fail_usage("model: long_term_window " + std::to_string(resolved_long_window()) +
                 " exceeds input_steps " + std::to_string(input_steps));
    }
    if (cycle_length * resolved_season_window() > resolved_long_window()) {
      fail_usage("model: season_window " + std::to_string(resolved_season_window()) +
                 " cycles of length " + std::to_string(cycle_length) +
                 " exceed long_term_window " + std::to_string(resolved_long_window()));
    }
    if (short_term_window > input_steps) {
      fail_usage("model: short_term_window " + std::to_string(short_term_window) +
                 " exceeds input_steps " + std::to_string(input_steps));
    }
  }
}

NodePtr mle_loss(const std::vector<double>& truth, const DistNodes& f) {
  if (truth.size() != f.mean->size()) {
    fail_data("mle_loss: " + std::to_string(truth.size()) + " targets for forecast shape " +
              shape_str(f.mean->shape));
  }
  const NodePtr y = tensor(f.mean->shape, truth);
  const NodePtr err = sub(y, f.mean);
  const NodePtr quad = div(square(err), scale(square(f.std), 2.0));
  return sum_all(add(log(f.std), quad));
}

NodePtr mse_loss(const std::vector<double>& truth, const DistNodes& f) {
  if (truth.size() != f.mean->size()) {
    fail_data("mse_loss: " + std::to_string(truth.size()) + " targets for forecast shape " +
              shape_str(f.mean->shape));
  }
  const NodePtr y = tensor(f.mean->shape, truth);
  return sum_all(square(sub(y, f.mean)));
}

NodePtr total_loss(const std::vector<double>& truth, const DistNodes& main, const DistNodes& aux,
                   double aux_weight, LossMode mode, LossMode aux_mode) {
  if (mode == LossMode::Mse) return mse_loss(truth, main);
  const NodePtr main_term = mle_loss(truth, main);
  if (aux_weight == 0.0 || !aux.mean) return main_term;
  const NodePtr aux_term =
      aux_mode == LossMode::Mse ? mse_loss(truth, aux) : mle_loss(truth, aux);
  return add(scale(aux_term, aux_weight), main_term);
}

NodePtr Model::add_param(const std::string& name, Shape shape, std::vector<double> data) {
  NodePtr node = variable(std::move(shape), std::move(data));
  params_.push_back(Parameter{name, node, {}, {}, 0});
  return node;
}

Model::Model(ModelConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(init_seed);
  const int n = cfg_.n_vars;
  const int c = cfg_.channels;
  const int width = 12 * c;
  auto noise = [&rng](Shape shape, double stddev) {
    std::vector<double> data(numel(shape));
    for (double& v : data) v = rng.normal(0.0, stddev);
    return std::pair<Shape, std::vector<double>>(std::move(shape), std::move(data));
  };
  auto filled = [](Shape shape, double value) {
    std::vector<double> data(numel(shape), value);
    return std::pair<Shape, std::vector<double>>(std::move(shape), std::move(data));
  };
  auto reg = [this](const std::string& name, std::pair<Shape, std::vector<double>> init) {
    return add_param(name, std::move(init.first), std::move(init.second));
  };

  if (cfg_.per_var_embed) {
    embed_w_ = reg("embed.w", noise({n, c}, 1.0));
    embed_b_ = reg("embed.b", filled({n, c}, 0.0));
  } else {
    embed_w_ = reg("embed.w", noise({c, 1}, 1.0));
    embed_b_ = reg("embed.b", filled({c}, 0.0));
  }

  const double proj_std = 1.0 / std::sqrt(static_cast<double>(width));
  for (int l = 0; l < cfg_.blocks; ++l) {
    const std::string prefix = "block" + std::to_string(l) + ".";
    BlockParams block;
    block.attn_logits = reg(prefix + "attention", noise({n, n}, 0.01));
    block.fusion.kernel = cfg_.kernel;
    block.fusion.w1 = reg(prefix + "fuse.w1", noise({cfg_.kernel, c, width}, proj_std));
    block.fusion.w2 = reg(prefix + "fuse.w2", noise({cfg_.kernel, c, width}, proj_std));
    if (cfg_.gate_bias) {
      block.fusion.b1 = reg(prefix + "fuse.b1", filled({c}, 0.0));
      // Starting the multiplicative branch at one keeps the chain transparent
      // at initialization instead of squashing deeper blocks toward zero.
      block.fusion.b2 = reg(prefix + "fuse.b2", filled({c}, 1.0));
    }
    blocks_.push_back(std::move(block));
  }

  if (cfg_.blocks > 0) {
    const int horizons = cfg_.horizons;
    const int lags = cfg_.short_term_window;
    auto ar_init = [&](const std::string& stream) {
      ARExtrapolator ar;
      std::vector<double> w(static_cast<std::size_t>(horizons) * lags * c * c, 0.0);
      for (int i = 0; i < horizons; ++i) {
        for (int j = 0; j < lags; ++j) {
          double* block_ptr = w.data() + (static_cast<std::size_t>(i) * lags + j) *
                                             static_cast<std::size_t>(c) * c;
          for (int o = 0; o < c; ++o) {
            for (int q = 0; q < c; ++q) {
              // Lag 0 starts as a damped copy of the latest value; other lags
              // start near zero so early training behaves like persistence.
              block_ptr[static_cast<std::size_t>(o) * c + q] =
                  (j == 0) ? (o == q ? 0.9 : 0.0) : rng.normal(0.0, 0.01);
            }
          }
        }
      }
      ar.w = add_param("extrap." + stream + ".w", {horizons, lags, c, c}, std::move(w));
      ar.b = reg("extrap." + stream + ".b", filled({horizons, c}, 0.0));
      return ar;
    };
    extrap_.z1 = ar_init("z1");
    extrap_.z2 = ar_init("z2");
    extrap_.z3 = ar_init("z3");
    extrap_.z4 = ar_init("z4");
    extrap_.mu_st = ar_init("mu_st");
    extrap_.sigma_st = ar_init("sigma_st");
    extrap_.mu_ce = ar_init("mu_ce");
    extrap_.sigma_ce = ar_init("sigma_ce");
    extrap_.gate.w1 = reg("extrap.gate.w1", noise({c, width}, proj_std));
    extrap_.gate.w2 = reg("extrap.gate.w2", noise({c, width}, proj_std));
    if (cfg_.gate_bias) {
      extrap_.gate.b1 = reg("extrap.gate.b1", filled({c}, 0.0));
      extrap_.gate.b2 = reg("extrap.gate.b2", filled({c}, 1.0));
    }
  }

  const double head_std = 1.0 / std::sqrt(static_cast<double>(c));
  head_mean_w_ = reg("head.mean.w", noise({1, c}, head_std));
  head_mean_b_ = reg("head.mean.b", filled({1}, 0.0));
  head_std_w_ = reg("head.std.w", noise({1, c}, head_std));
  // softplus(b) = 1: predictions start at unit scale on standardized data.
  head_std_b_ = reg("head.std.b", filled({1}, std::log(std::exp(1.0) - 1.0)));
}

long long Model::count_parameters() const {
  long long total = 0;
  for (const auto& p : params_) total += static_cast<long long>(p.node->size());
  return total;
}

NodePtr Model::embed(const NodePtr& y) const {
  const int n = y->shape[0];
  const int t_len = y->shape[1];
  const int c = cfg_.channels;
  if (cfg_.per_var_embed) {
    const NodePtr yr = reshape(y, {n, t_len, 1});
    const NodePtr w = reshape(embed_w_, {n, 1, c});
    const NodePtr b = reshape(embed_b_, {n, 1, c});
    return add(mul(yr, w), b);
  }
  const NodePtr flat = reshape(y, {n * t_len, 1});
  return reshape(linear(flat, embed_w_, embed_b_), {n, t_len, c});
}

DistNodes Model::heads(const NodePtr& s_hat) const {
  const int n = s_hat->shape[0];
  const int horizons = s_hat->shape[1];
  const NodePtr flat = reshape(s_hat, {n * horizons, cfg_.channels});
  DistNodes out;
  out.mean = reshape(linear(flat, head_mean_w_, head_mean_b_), {n, horizons});
  out.std = softplus(reshape(linear(flat, head_std_w_, head_std_b_), {n, horizons}));
  return out;
}

Model::GraphOut Model::build_forward(const double* window, bool with_aux) const {
  if (cfg_.blocks < 1) fail_usage("forward: model was built with zero blocks");
  const int n = cfg_.n_vars;
  const int t_in = cfg_.input_steps;
  std::vector<double> values(window, window + static_cast<std::size_t>(n) * t_in);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      fail_numeric("forward: non-finite input at flat index " + std::to_string(i));
    }
  }
  GraphOut g;
  const NodePtr y = tensor({n, t_in}, std::move(values));
  g.stack = stack_blocks(embed(y), blocks_, cfg_.decouple_config());
  const DecoupleOut& last = g.stack.blocks.back();
  g.extrap = extrapolate_all(last.components, last.residuals, t_in - 1, extrap_,
                             cfg_.extrap_config());
  g.main = heads(g.extrap.s_hat);
  if (with_aux) {
    const NodePtr masked =
        zero_mask(g.extrap.z_hat, std::vector<double>(g.extrap.z_hat->size(), 0.0));
    const int horizons = cfg_.horizons;
    const NodePtr s_aux =
        gate_apply(reshape(masked, {n * horizons, 4 * cfg_.channels}),
                   reshape(g.extrap.h_hat, {n * horizons, 8 * cfg_.channels}), extrap_.gate);
    g.aux = heads(reshape(s_aux, {n, horizons, cfg_.channels}));
  }
  return g;
}

void Model::standardize(const double* raw, double* out, std::size_t count) const {
  const std::size_t n = static_cast<std::size_t>(cfg_.n_vars);
  const std::size_t t_len = count / n;
  const bool identity = norm_mean.empty();
  for (std::size_t v = 0; v < n; ++v) {
    const double mean = identity ? 0.0 : norm_mean[v];
    const double std_v = identity ? 1.0 : norm_std[v];
    for (std::size_t t = 0; t < t_len; ++t) {
      out[v * t_len + t] = (raw[v * t_len + t] - mean) / std_v;
    }
  }
}

ForecastDistribution Model::forecast(const double* raw_window, long long origin_t) const {
  const std::size_t count = static_cast<std::size_t>(cfg_.n_vars) * cfg_.input_steps;
  std::vector<double> window(count);
  standardize(raw_window, window.data(), count);
  NoGradGuard guard;
  const GraphOut g = build_forward(window.data(), false);
  ForecastDistribution f;
  f.n_vars = cfg_.n_vars;
  f.horizons = cfg_.horizons;
  f.origin_t = origin_t;
  f.mean = g.main.mean->data;
  f.std = g.main.std->data;
  const bool identity = norm_mean.empty();
  for (int v = 0; v < cfg_.n_vars; ++v) {
    const double mean = identity ? 0.0 : norm_mean[static_cast<std::size_t>(v)];
    const double std_v = identity ? 1.0 : norm_std[static_cast<std::size_t>(v)];
    for (int i = 0; i < cfg_.horizons; ++i) {
      const std::size_t at = static_cast<std::size_t>(v) * cfg_.horizons + i;
      f.mean[at] = f.mean[at] * std_v + mean;
      f.std[at] *= std_v;
    }
  }
  return f;
}

StackOut Model::run_stack(const double* std_series, int t_len) const {
  if (cfg_.blocks < 1) fail_usage("run_stack: model was built with zero blocks");
  NoGradGuard guard;
  const std::size_t count = static_cast<std::size_t>(cfg_.n_vars) * t_len;
  const NodePtr y = tensor({cfg_.n_vars, t_len}, std::vector<double>(std_series, std_series + count));
  return stack_blocks(embed(y), blocks_, cfg_.decouple_config());
}

namespace {

constexpr int kCheckpointVersion = 1;
constexpr std::size_t kConfigSlots = 16;

std::vector<double> encode_config(const ModelConfig& c) {
  return {static_cast<double>(c.n_vars),
          static_cast<double>(c.input_steps),
          static_cast<double>(c.horizons),
          static_cast<double>(c.channels),
          static_cast<double>(c.blocks),
          static_cast<double>(c.kernel),
          static_cast<double>(c.long_term_window),
          static_cast<double>(c.cycle_length),
          static_cast<double>(c.season_window),
          static_cast<double>(c.short_term_window),
          c.variance_floor,
          c.aux_weight,
          c.gate_bias ? 1.0 : 0.0,
          c.per_var_embed ? 1.0 : 0.0,
          c.loss_mode == LossMode::Mse ? 1.0 : 0.0,
          c.aux_loss_mode == LossMode::Mse ? 1.0 : 0.0};
}

ModelConfig decode_config(const std::vector<double>& v) {
  if (v.size() != kConfigSlots) {
    fail_data("checkpoint: config block has " + std::to_string(v.size()) + " values, expected " +
              std::to_string(kConfigSlots));
  }
  ModelConfig c;
  c.n_vars = static_cast<int>(v[0]);
  c.input_steps = static_cast<int>(v[1]);
  c.horizons = static_cast<int>(v[2]);
  c.channels = static_cast<int>(v[3]);
  c.blocks = static_cast<int>(v[4]);
  c.kernel = static_cast<int>(v[5]);
  c.long_term_window = static_cast<int>(v[6]);
  c.cycle_length = static_cast<int>(v[7]);
  c.season_window = static_cast<int>(v[8]);
  c.short_term_window = static_cast<int>(v[9]);
  c.variance_floor = v[10];
  c.aux_weight = v[11];
  c.gate_bias = v[12] != 0.0;
  c.per_var_embed = v[13] != 0.0;
  c.loss_mode = v[14] != 0.0 ? LossMode::Mse : LossMode::Mle;
  c.aux_loss_mode = v[15] != 0.0 ? LossMode::Mse : LossMode::Mle;
  return c;
}

struct ManifestEntry {
  std::string name;
  Shape shape;
};

}  // namespace

void Model::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_data("checkpoint: cannot write " + path);
  std::vector<double> norm_mean_out = norm_mean;
  std::vector<double> norm_std_out = norm_std;
  if (norm_mean_out.empty()) {
    norm_mean_out.assign(static_cast<std::size_t>(cfg_.n_vars), 0.0);
    norm_std_out.assign(static_cast<std::size_t>(cfg_.n_vars), 1.0);
  }
  const std::vector<double> version{static_cast<double>(kCheckpointVersion)};
  const std::vector<double> config = encode_config(cfg_);

  std::ostringstream manifest;
  std::vector<const std::vector<double>*> blobs;
  auto emit = [&](const std::string& name, const Shape& shape, const std::vector<double>& data) {
    manifest << name;
    for (int d : shape) manifest << ' ' << d;
    manifest << '\n';
    blobs.push_back(&data);
  };
  emit("__meta.version", {1}, version);
  emit("__meta.config", {static_cast<int>(kConfigSlots)}, config);
  emit("__meta.norm_mean", {cfg_.n_vars}, norm_mean_out);
  emit("__meta.norm_std", {cfg_.n_vars}, norm_std_out);
  for (const auto& p : params_) emit(p.name, p.node->shape, p.node->data);

  out << manifest.str() << '\n';
  for (const auto* blob : blobs) {
    out.write(reinterpret_cast<const char*>(blob->data()),
              static_cast<std::streamsize>(blob->size() * sizeof(double)));
  }
  if (!out) fail_data("checkpoint: short write to " + path);
}

Model Model::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_data("checkpoint: cannot read " + path);
  std::vector<ManifestEntry> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) break;
    std::istringstream fields(line);
    ManifestEntry e;
    fields >> e.name;
    int dim = 0;
    while (fields >> dim) e.shape.push_back(dim);
    if (e.name.empty() || fields.bad()) fail_data("checkpoint: malformed manifest line '" + line + "'");
    entries.push_back(std::move(e));
  }
  if (entries.size() < 4) fail_data("checkpoint: manifest truncated");
  std::vector<std::vector<double>> payload(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    payload[i].resize(numel(entries[i].shape));
    in.read(reinterpret_cast<char*>(payload[i].data()),
            static_cast<std::streamsize>(payload[i].size() * sizeof(double)));
    if (!in) fail_data("checkpoint: blob truncated at entry " + entries[i].name);
  }
  if (entries[0].name != "__meta.version" || payload[0].size() != 1 ||
      payload[0][0] != static_cast<double>(kCheckpointVersion)) {
    fail_data("checkpoint: unsupported or missing format version");
  }
  if (entries[1].name != "__meta.config" || entries[2].name != "__meta.norm_mean" ||
      entries[3].name != "__meta.norm_std") {
    fail_data("checkpoint: meta entries out of order");
  }
  Model model(decode_config(payload[1]), 0);
  model.norm_mean = std::move(payload[2]);
  model.norm_std = std::move(payload[3]);
  const std::size_t n_params = entries.size() - 4;
  if (n_params != model.params_.size()) {
    fail_data("checkpoint: holds " + std::to_string(n_params) + " parameters, model expects " +
              std::to_string(model.params_.size()));
  }
  for (std::size_t i = 0; i < n_params; ++i) {
    const ManifestEntry& e = entries[i + 4];
    Parameter& p = model.params_[i];
    if (e.name != p.name || e.shape != p.node->shape) {
      fail_data("checkpoint: entry '" + e.name + "' " + shape_str(e.shape) +
                " does not match expected '" + p.name + "' " + shape_str(p.node->shape));
    }
    p.node->data = std::move(payload[i + 4]);
  }
  return model;
}

}  // namespace scnn
