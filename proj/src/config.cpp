#include "config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace scnn {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

struct KeyContext {
  std::string where;  // "path: line 12" or "override model.lr"

  [[noreturn]] void fail(const std::string& what) const { fail_usage(where + ": " + what); }

  long long to_int(const std::string& v) const {
    long long out = 0;
    auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || end != v.data() + v.size()) fail("cannot parse integer '" + v + "'");
    return out;
  }

  double to_double(const std::string& v) const {
    double out = 0.0;
    auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || end != v.data() + v.size() || !std::isfinite(out)) {
      fail("cannot parse number '" + v + "'");
    }
    return out;
  }

  bool to_bool(const std::string& v) const {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail("cannot parse boolean '" + v + "' (expected true/false/1/0)");
  }
};

void set_model_key(ModelConfig& m, const std::string& key, const std::string& value,
                   const KeyContext& ctx) {
  if (key == "n_vars") m.n_vars = static_cast<int>(ctx.to_int(value));
  else if (key == "input_steps") m.input_steps = static_cast<int>(ctx.to_int(value));
  else if (key == "horizons") m.horizons = static_cast<int>(ctx.to_int(value));
  else if (key == "channels") m.channels = static_cast<int>(ctx.to_int(value));
  else if (key == "blocks") m.blocks = static_cast<int>(ctx.to_int(value));
  else if (key == "kernel") m.kernel = static_cast<int>(ctx.to_int(value));
  else if (key == "long_term_window") m.long_term_window = static_cast<int>(ctx.to_int(value));
  else if (key == "cycle_length") m.cycle_length = static_cast<int>(ctx.to_int(value));
  else if (key == "season_window") m.season_window = static_cast<int>(ctx.to_int(value));
  else if (key == "short_term_window") m.short_term_window = static_cast<int>(ctx.to_int(value));
  else if (key == "variance_floor") m.variance_floor = ctx.to_double(value);
  else if (key == "aux_weight") m.aux_weight = ctx.to_double(value);
  else if (key == "gate_bias") m.gate_bias = ctx.to_bool(value);
  else if (key == "per_var_embed") m.per_var_embed = ctx.to_bool(value);
  else if (key == "loss_mode") m.loss_mode = loss_mode_from_string(value);
  else if (key == "aux_loss_mode") m.aux_loss_mode = loss_mode_from_string(value);
  else ctx.fail("unknown [model] key '" + key + "'");
}

void set_train_key(TrainConfig& t, const std::string& key, const std::string& value,
                   const KeyContext& ctx) {
  if (key == "batch_size") t.batch_size = static_cast<int>(ctx.to_int(value));
  else if (key == "lr") t.lr = ctx.to_double(value);
  else if (key == "max_epochs") t.max_epochs = static_cast<int>(ctx.to_int(value));
  else if (key == "patience") t.patience = static_cast<int>(ctx.to_int(value));
  else if (key == "seed") t.seed = static_cast<std::uint64_t>(ctx.to_int(value));
  else if (key == "val_frac") t.val_frac = ctx.to_double(value);
  else if (key == "test_frac") t.test_frac = ctx.to_double(value);
  else ctx.fail("unknown [train] key '" + key + "'");
}

void set_data_key(SynthSpec& d, const std::string& key, const std::string& value,
                  const KeyContext& ctx) {
  if (key == "n_vars") d.n_vars = static_cast<int>(ctx.to_int(value));
  else if (key == "t_steps") d.t_steps = ctx.to_int(value);
  else if (key == "cycle_length") d.cycle_length = static_cast<int>(ctx.to_int(value));
  else if (key == "seed") d.seed = static_cast<std::uint64_t>(ctx.to_int(value));
  else if (key == "base_level") d.base_level = ctx.to_double(value);
  else if (key == "lt_amp") d.lt_amp = ctx.to_double(value);
  else if (key == "lt_timescale") d.lt_timescale = ctx.to_double(value);
  else if (key == "lt_sigma_scale") d.lt_sigma_scale = ctx.to_double(value);
  else if (key == "lt_ramp") d.lt_ramp = ctx.to_double(value);
  else if (key == "lt_ramp_begin_frac") d.lt_ramp_begin_frac = ctx.to_double(value);
  else if (key == "se_amp") d.se_amp = ctx.to_double(value);
  else if (key == "se_sigma_scale") d.se_sigma_scale = ctx.to_double(value);
  else if (key == "st_shock_rate") d.st_shock_rate = ctx.to_double(value);
  else if (key == "st_shock_mag") d.st_shock_mag = ctx.to_double(value);
  else if (key == "st_shock_duration") d.st_shock_duration = static_cast<int>(ctx.to_int(value));
  else if (key == "st_sigma_scale") d.st_sigma_scale = ctx.to_double(value);
  else if (key == "ce_groups") d.ce_groups = static_cast<int>(ctx.to_int(value));
  else if (key == "ce_shock_rate") d.ce_shock_rate = ctx.to_double(value);
  else if (key == "ce_shock_mag") d.ce_shock_mag = ctx.to_double(value);
  else if (key == "ce_shock_duration") d.ce_shock_duration = static_cast<int>(ctx.to_int(value));
  else if (key == "ce_sigma_scale") d.ce_sigma_scale = ctx.to_double(value);
  else if (key == "residual_std") d.residual_std = ctx.to_double(value);
  else ctx.fail("unknown [data] key '" + key + "'");
}

void set_key(RunConfig& cfg, const std::string& section, const std::string& key,
             const std::string& value, const KeyContext& ctx) {
  if (section == "model") set_model_key(cfg.model, key, value, ctx);
  else if (section == "train") set_train_key(cfg.train, key, value, ctx);
  else if (section == "data") set_data_key(cfg.data, key, value, ctx);
  else ctx.fail("unknown section [" + section + "]");
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_usage("cannot open config " + path);
  RunConfig cfg;
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.erase(comment);
    const std::string text = trim(line);
    if (text.empty()) continue;
    const KeyContext ctx{path + ": line " + std::to_string(line_no)};
    if (text.front() == '[') {
      if (text.back() != ']') ctx.fail("unterminated section header '" + text + "'");
      section = trim(text.substr(1, text.size() - 2));
      if (section != "model" && section != "train" && section != "data") {
        ctx.fail("unknown section [" + section + "]");
      }
      continue;
    }
    const std::size_t eq = text.find('=');
    if (eq == std::string::npos) ctx.fail("expected key = value, got '" + text + "'");
    if (section.empty()) ctx.fail("key outside any section");
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (key.empty()) ctx.fail("empty key");
    if (value.empty()) ctx.fail("empty value for key '" + key + "'");
    set_key(cfg, section, key, value, ctx);
  }
  return cfg;
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const KeyContext ctx{"override '" + assignment + "'"};
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos) ctx.fail("expected section.key=value");
  const std::string path = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  const std::size_t dot = path.find('.');
  if (dot == std::string::npos) ctx.fail("expected section.key=value");
  set_key(cfg, path.substr(0, dot), path.substr(dot + 1), value, ctx);
}

void write_resolved_config(const RunConfig& cfg, std::ostream& out) {
  char buf[64];
  const auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  out << "[model]\n";
  out << "n_vars = " << cfg.model.n_vars << '\n';
  out << "input_steps = " << cfg.model.input_steps << '\n';
  out << "horizons = " << cfg.model.horizons << '\n';
  out << "channels = " << cfg.model.channels << '\n';
  out << "blocks = " << cfg.model.blocks << '\n';
  out << "kernel = " << cfg.model.kernel << '\n';
  out << "long_term_window = " << cfg.model.long_term_window << '\n';
  out << "cycle_length = " << cfg.model.cycle_length << '\n';
  out << "season_window = " << cfg.model.season_window << '\n';
  out << "short_term_window = " << cfg.model.short_term_window << '\n';
  out << "variance_floor = " << num(cfg.model.variance_floor) << '\n';
  out << "aux_weight = " << num(cfg.model.aux_weight) << '\n';
  out << "gate_bias = " << (cfg.model.gate_bias ? "true" : "false") << '\n';
  out << "per_var_embed = " << (cfg.model.per_var_embed ? "true" : "false") << '\n';
  out << "loss_mode = " << to_string(cfg.model.loss_mode) << '\n';
  out << "aux_loss_mode = " << to_string(cfg.model.aux_loss_mode) << '\n';
  out << "\n[train]\n";
  out << "batch_size = " << cfg.train.batch_size << '\n';
  out << "lr = " << num(cfg.train.lr) << '\n';
  out << "max_epochs = " << cfg.train.max_epochs << '\n';
  out << "patience = " << cfg.train.patience << '\n';
  out << "seed = " << cfg.train.seed << '\n';
  out << "val_frac = " << num(cfg.train.val_frac) << '\n';
  out << "test_frac = " << num(cfg.train.test_frac) << '\n';
  out << "\n[data]\n";
  out << "n_vars = " << cfg.data.n_vars << '\n';
  out << "t_steps = " << cfg.data.t_steps << '\n';
  out << "cycle_length = " << cfg.data.cycle_length << '\n';
  out << "seed = " << cfg.data.seed << '\n';
  out << "base_level = " << num(cfg.data.base_level) << '\n';
  out << "lt_amp = " << num(cfg.data.lt_amp) << '\n';
  out << "lt_timescale = " << num(cfg.data.lt_timescale) << '\n';
  out << "lt_sigma_scale = " << num(cfg.data.lt_sigma_scale) << '\n';
  out << "lt_ramp = " << num(cfg.data.lt_ramp) << '\n';
  out << "lt_ramp_begin_frac = " << num(cfg.data.lt_ramp_begin_frac) << '\n';
  out << "se_amp = " << num(cfg.data.se_amp) << '\n';
  out << "se_sigma_scale = " << num(cfg.data.se_sigma_scale) << '\n';
  out << "st_shock_rate = " << num(cfg.data.st_shock_rate) << '\n';
  out << "st_shock_mag = " << num(cfg.data.st_shock_mag) << '\n';
  out << "st_shock_duration = " << cfg.data.st_shock_duration << '\n';
  out << "st_sigma_scale = " << num(cfg.data.st_sigma_scale) << '\n';
  out << "ce_groups = " << cfg.data.ce_groups << '\n';
  out << "ce_shock_rate = " << num(cfg.data.ce_shock_rate) << '\n';
  out << "ce_shock_mag = " << num(cfg.data.ce_shock_mag) << '\n';
  out << "ce_shock_duration = " << cfg.data.ce_shock_duration << '\n';
  out << "ce_sigma_scale = " << num(cfg.data.ce_sigma_scale) << '\n';
  out << "residual_std = " << num(cfg.data.residual_std) << '\n';
}

}  // namespace scnn
