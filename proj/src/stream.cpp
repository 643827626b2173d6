#include "stream.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"

namespace scnn {

double ema_update(double acc, double x, double lambda) {
  return lambda * acc + (1.0 - lambda) * x;
}

double ema_read(double acc, double lambda, long long steps) {
  if (steps <= 0) return 0.0;
  if (lambda <= 0.0) return acc;
  const double denom = 1.0 - std::pow(lambda, static_cast<double>(steps));
  if (denom <= 0.0) return acc;
  return acc / denom;
}

void StreamState::RowRing::reset(std::size_t capacity, std::size_t width) {
  rows.assign(capacity, std::vector<double>(width, 0.0));
  head = 0;
  filled = 0;
}

void StreamState::RowRing::push(const std::vector<double>& row) {
  if (rows.empty()) return;
  if (filled < rows.size()) {
    rows[(head + filled) % rows.size()] = row;
    ++filled;
  } else {
    rows[head] = row;
    head = (head + 1) % rows.size();
  }
}

const std::vector<double>& StreamState::RowRing::at(std::size_t lag) const {
  const std::size_t clamped = filled > 0 ? std::min(lag, filled - 1) : 0;
  return rows[(head + filled - 1 - clamped) % rows.size()];
}

void StreamState::init(const Model* model, bool ema) {
  if (model == nullptr) fail_usage("stream: init needs a model");
  const ModelConfig& cfg = model->config();
  model_ = model;
  ema_ = ema;
  steps_ = 0;

  const std::size_t n = static_cast<std::size_t>(cfg.n_vars);
  const std::size_t c = static_cast<std::size_t>(cfg.channels);
  const std::size_t nc = n * c;

  hist_.reset(0, 0);
  blocks_.clear();
  if (!ema_) {
    hist_.reset(static_cast<std::size_t>(cfg.input_steps), n);
    scratch_window_.assign(n * static_cast<std::size_t>(cfg.input_steps), 0.0);
    return;
  }

  lambda_lt_ = 1.0 - 1.0 / static_cast<double>(cfg.resolved_long_window());
  lambda_se_ = 1.0 - 1.0 / static_cast<double>(cfg.resolved_season_window());
  lambda_st_ = 1.0 - 1.0 / static_cast<double>(cfg.short_term_window);

  blocks_.resize(model->block_params().size());
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    BlockState& bs = blocks_[l];
    const std::vector<double>& logits = model->block_params()[l].attn_logits->data;
    bs.attn.resize(n * n);
    for (std::size_t v = 0; v < n; ++v) {
      const double* row = logits.data() + v * n;
      double hi = row[0];
      for (std::size_t j = 1; j < n; ++j) hi = std::max(hi, row[j]);
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        bs.attn[v * n + j] = std::exp(row[j] - hi);
        sum += bs.attn[v * n + j];
      }
      for (std::size_t j = 0; j < n; ++j) bs.attn[v * n + j] /= sum;
    }
    bs.lt_m1.assign(nc, 0.0);
    bs.lt_m2.assign(nc, 0.0);
    bs.se.assign(static_cast<std::size_t>(cfg.cycle_length), PhaseAccum{});
    for (PhaseAccum& acc : bs.se) {
      acc.m1.assign(nc, 0.0);
      acc.m2.assign(nc, 0.0);
    }
    bs.st_m1.assign(nc, 0.0);
    bs.st_m2.assign(nc, 0.0);
    bs.fuse_taps.reset(static_cast<std::size_t>(cfg.kernel > 1 ? cfg.kernel - 1 : 0), n * 12 * c);
  }
  const std::size_t lags = static_cast<std::size_t>(cfg.short_term_window);
  for (RowRing* ring : {&ar_z1_, &ar_z2_, &ar_z3_, &ar_z4_, &ar_mu_st_, &ar_sigma_st_, &ar_mu_ce_,
                        &ar_sigma_ce_}) {
    ring->reset(lags, nc);
  }
}

ForecastDistribution StreamState::push(const double* y_raw) {
  if (!initialized()) fail_usage("stream: push before init");
  const int n = model_->config().n_vars;
  for (int v = 0; v < n; ++v) {
    if (!std::isfinite(y_raw[v])) {
      fail_numeric("stream: non-finite observation for variable " + std::to_string(v));
    }
  }
  ++steps_;
  return ema_ ? push_ema(y_raw) : push_exact(y_raw);
}

ForecastDistribution StreamState::push_exact(const double* y_raw) {
  const ModelConfig& cfg = model_->config();
  const std::size_t n = static_cast<std::size_t>(cfg.n_vars);
  const std::size_t t_in = static_cast<std::size_t>(cfg.input_steps);
  hist_.push(std::vector<double>(y_raw, y_raw + n));
  // Before the window fills, missing leading steps repeat the earliest
  // observation, which the lag clamp in at() provides.
  for (std::size_t s = 0; s < t_in; ++s) {
    const std::vector<double>& row = hist_.at(t_in - 1 - s);
    for (std::size_t v = 0; v < n; ++v) scratch_window_[v * t_in + s] = row[v];
  }
  return model_->forecast(scratch_window_.data(), steps_ - 1);
}

namespace {

double softplus_stable(double v) {
  return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

// out[v,:] = b_row(i) + sum_j w(i,j) . hist_j[v,:], mirroring ar_apply for
// one horizon with ring rows standing in for the gathered history.
void ar_predict(const ARExtrapolator& ar, int horizon_index,
                const std::vector<const std::vector<double>*>& lag_rows, std::size_t n,
                std::size_t c, std::vector<double>& out) {
  const std::size_t lags = lag_rows.size();
  const double* w = ar.w->data.data();
  const double* b = ar.b ? ar.b->data.data() : nullptr;
  out.assign(n * c, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    double* orow = out.data() + v * c;
    if (b) {
      const double* brow = b + static_cast<std::size_t>(horizon_index) * c;
      std::copy(brow, brow + c, orow);
    }
    for (std::size_t j = 0; j < lags; ++j) {
      const double* hrow = lag_rows[j]->data() + v * c;
      const double* wmat =
          w + ((static_cast<std::size_t>(horizon_index) * lags + j) * c) * c;
      for (std::size_t o = 0; o < c; ++o) {
        const double* wrow = wmat + o * c;
        double acc = 0.0;
        for (std::size_t q = 0; q < c; ++q) acc += wrow[q] * hrow[q];
        orow[o] += acc;
      }
    }
  }
}

}  // namespace

ForecastDistribution StreamState::push_ema(const double* y_raw) {
  const ModelConfig& cfg = model_->config();
  const std::size_t n = static_cast<std::size_t>(cfg.n_vars);
  const std::size_t c = static_cast<std::size_t>(cfg.channels);
  const std::size_t nc = n * c;
  const std::size_t width = 12 * c;
  const long long t = steps_ - 1;
  const int m = cfg.cycle_length;
  const double floor = cfg.variance_floor;

  std::vector<double> y_std(n);
  model_->standardize(y_raw, y_std.data(), n);

  // Embedding of the single new cross-section.
  std::vector<double> x(nc);
  {
    const std::vector<double>* wp = nullptr;
    const std::vector<double>* bp = nullptr;
    for (const auto& p : model_->params()) {
      if (p.name == "embed.w") wp = &p.node->data;
      if (p.name == "embed.b") bp = &p.node->data;
    }
    if (!wp || !bp) fail_usage("stream: model has no embedding parameters");
    const std::vector<double>& w = *wp;
    const std::vector<double>& b = *bp;
    if (cfg.per_var_embed) {
      for (std::size_t v = 0; v < n; ++v) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          x[v * c + ch] = y_std[v] * w[v * c + ch] + b[v * c + ch];
        }
      }
    } else {
      for (std::size_t v = 0; v < n; ++v) {
        for (std::size_t ch = 0; ch < c; ++ch) x[v * c + ch] = y_std[v] * w[ch] + b[ch];
      }
    }
  }

  std::vector<double> z1(nc), z2(nc), z3(nc), z4(nc);
  std::vector<double> mu_lt(nc), sigma_lt(nc), mu_se(nc), sigma_se(nc);
  std::vector<double> mu_st(nc), sigma_st(nc), mu_ce(nc), sigma_ce(nc);
  std::vector<double> zh(n * width);
  std::vector<double> state(nc);

  const auto sigma_of = [floor](double m1, double m2) {
    return std::sqrt(std::max(0.0, m2 - m1 * m1) + floor);
  };

  const std::size_t phase = static_cast<std::size_t>(t % m);
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    BlockState& bs = blocks_[l];
    for (std::size_t i = 0; i < nc; ++i) {
      bs.lt_m1[i] = ema_update(bs.lt_m1[i], x[i], lambda_lt_);
      bs.lt_m2[i] = ema_update(bs.lt_m2[i], x[i] * x[i], lambda_lt_);
      mu_lt[i] = ema_read(bs.lt_m1[i], lambda_lt_, steps_);
      sigma_lt[i] = sigma_of(mu_lt[i], ema_read(bs.lt_m2[i], lambda_lt_, steps_));
      z1[i] = (x[i] - mu_lt[i]) / sigma_lt[i];
    }
    PhaseAccum& se = bs.se[phase];
    ++se.count;
    for (std::size_t i = 0; i < nc; ++i) {
      se.m1[i] = ema_update(se.m1[i], z1[i], lambda_se_);
      se.m2[i] = ema_update(se.m2[i], z1[i] * z1[i], lambda_se_);
      mu_se[i] = ema_read(se.m1[i], lambda_se_, se.count);
      sigma_se[i] = sigma_of(mu_se[i], ema_read(se.m2[i], lambda_se_, se.count));
      z2[i] = (z1[i] - mu_se[i]) / sigma_se[i];
    }
    for (std::size_t i = 0; i < nc; ++i) {
      bs.st_m1[i] = ema_update(bs.st_m1[i], z2[i], lambda_st_);
      bs.st_m2[i] = ema_update(bs.st_m2[i], z2[i] * z2[i], lambda_st_);
      mu_st[i] = ema_read(bs.st_m1[i], lambda_st_, steps_);
      sigma_st[i] = sigma_of(mu_st[i], ema_read(bs.st_m2[i], lambda_st_, steps_));
      z3[i] = (z2[i] - mu_st[i]) / sigma_st[i];
    }
    // Cross-variable statistics need no history, so they stay exact.
    for (std::size_t v = 0; v < n; ++v) {
      const double* arow = bs.attn.data() + v * n;
      for (std::size_t ch = 0; ch < c; ++ch) {
        double m1 = 0.0;
        double m2 = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double zj = z3[j * c + ch];
          m1 += arow[j] * zj;
          m2 += arow[j] * zj * zj;
        }
        const std::size_t i = v * c + ch;
        mu_ce[i] = m1;
        sigma_ce[i] = sigma_of(m1, m2);
        z4[i] = (z3[i] - mu_ce[i]) / sigma_ce[i];
      }
    }
    for (std::size_t v = 0; v < n; ++v) {
      double* row = zh.data() + v * width;
      for (std::size_t ch = 0; ch < c; ++ch) {
        row[0 * c + ch] = z1[v * c + ch];
        row[1 * c + ch] = z2[v * c + ch];
        row[2 * c + ch] = z3[v * c + ch];
        row[3 * c + ch] = z4[v * c + ch];
        row[4 * c + ch] = mu_lt[v * c + ch];
        row[5 * c + ch] = sigma_lt[v * c + ch];
        row[6 * c + ch] = mu_se[v * c + ch];
        row[7 * c + ch] = sigma_se[v * c + ch];
        row[8 * c + ch] = mu_st[v * c + ch];
        row[9 * c + ch] = sigma_st[v * c + ch];
        row[10 * c + ch] = mu_ce[v * c + ch];
        row[11 * c + ch] = sigma_ce[v * c + ch];
      }
    }
    {
      const FusionParams& fp = model_->block_params()[l].fusion;
      const double* w1 = fp.w1->data.data();
      const double* w2 = fp.w2->data.data();
      const double* b1 = fp.b1 ? fp.b1->data.data() : nullptr;
      const double* b2 = fp.b2 ? fp.b2->data.data() : nullptr;
      for (std::size_t v = 0; v < n; ++v) {
        for (std::size_t o = 0; o < c; ++o) {
          double left = b1 ? b1[o] : 0.0;
          double right = b2 ? b2[o] : 0.0;
          for (int j = 0; j < fp.kernel; ++j) {
            // Taps older than the stream are zero, like the offline
            // zero-filled time shift.
            if (j > 0 && static_cast<std::size_t>(j) > bs.fuse_taps.filled) break;
            const double* tap =
                j == 0 ? zh.data() + v * width
                       : bs.fuse_taps.at(static_cast<std::size_t>(j - 1)).data() + v * width;
            const double* w1row = w1 + (static_cast<std::size_t>(j) * c + o) * width;
            const double* w2row = w2 + (static_cast<std::size_t>(j) * c + o) * width;
            for (std::size_t q = 0; q < width; ++q) {
              left += w1row[q] * tap[q];
              right += w2row[q] * tap[q];
            }
          }
          state[v * c + o] = left * right;
        }
      }
    }
    bs.fuse_taps.push(zh);
    if (l + 1 == blocks_.size()) {
      ar_z1_.push(z1);
      ar_z2_.push(z2);
      ar_z3_.push(z3);
      ar_z4_.push(z4);
      ar_mu_st_.push(mu_st);
      ar_sigma_st_.push(sigma_st);
      ar_mu_ce_.push(mu_ce);
      ar_sigma_ce_.push(sigma_ce);
    }
    x = state;
  }

  // Extrapolate from the final block's streamed components.
  const ExtrapParams& ep = model_->extrap_params();
  const int horizons = cfg.horizons;
  ForecastDistribution f;
  f.n_vars = cfg.n_vars;
  f.horizons = horizons;
  f.origin_t = t;
  f.mean.assign(n * static_cast<std::size_t>(horizons), 0.0);
  f.std.assign(n * static_cast<std::size_t>(horizons), 0.0);

  const std::size_t lags = static_cast<std::size_t>(cfg.short_term_window);
  std::vector<const std::vector<double>*> lag_rows(lags);
  const auto rows_of = [&](const RowRing& ring) {
    for (std::size_t j = 0; j < lags; ++j) lag_rows[j] = &ring.at(j);
  };
  std::vector<double> hz1, hz2, hz3, hz4, hmu_st, hsigma_st, hmu_ce, hsigma_ce;
  std::vector<double> gate_in(width);
  const BlockState& last = blocks_.back();
  const auto param_data = [&](const char* name) -> const std::vector<double>& {
    for (const auto& p : model_->params()) {
      if (p.name == name) return p.node->data;
    }
    fail_usage(std::string("stream: model has no parameter ") + name);
  };
  const std::vector<double>& hm_w = param_data("head.mean.w");
  const std::vector<double>& hm_b = param_data("head.mean.b");
  const std::vector<double>& hs_w = param_data("head.std.w");
  const std::vector<double>& hs_b = param_data("head.std.b");
  const double* gw1 = ep.gate.w1->data.data();
  const double* gw2 = ep.gate.w2->data.data();
  const double* gb1 = ep.gate.b1 ? ep.gate.b1->data.data() : nullptr;
  const double* gb2 = ep.gate.b2 ? ep.gate.b2->data.data() : nullptr;

  for (int i = 1; i <= horizons; ++i) {
    rows_of(ar_z1_);
    ar_predict(ep.z1, i - 1, lag_rows, n, c, hz1);
    rows_of(ar_z2_);
    ar_predict(ep.z2, i - 1, lag_rows, n, c, hz2);
    rows_of(ar_z3_);
    ar_predict(ep.z3, i - 1, lag_rows, n, c, hz3);
    rows_of(ar_z4_);
    ar_predict(ep.z4, i - 1, lag_rows, n, c, hz4);
    rows_of(ar_mu_st_);
    ar_predict(ep.mu_st, i - 1, lag_rows, n, c, hmu_st);
    rows_of(ar_sigma_st_);
    ar_predict(ep.sigma_st, i - 1, lag_rows, n, c, hsigma_st);
    rows_of(ar_mu_ce_);
    ar_predict(ep.mu_ce, i - 1, lag_rows, n, c, hmu_ce);
    rows_of(ar_sigma_ce_);
    ar_predict(ep.sigma_ce, i - 1, lag_rows, n, c, hsigma_ce);

    // Seasonal statistics read the phase the target time lands on; a phase
    // the stream has never seen falls back to the current one.
    std::size_t fphase = static_cast<std::size_t>((t + i) % m);
    if (last.se[fphase].count == 0) fphase = phase;

    for (std::size_t v = 0; v < n; ++v) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t at = v * c + ch;
        gate_in[0 * c + ch] = hz1[at];
        gate_in[1 * c + ch] = hz2[at];
        gate_in[2 * c + ch] = hz3[at];
        gate_in[3 * c + ch] = hz4[at];
        gate_in[4 * c + ch] = ema_read(last.lt_m1[at], lambda_lt_, steps_);
        gate_in[5 * c + ch] =
            sigma_of(gate_in[4 * c + ch], ema_read(last.lt_m2[at], lambda_lt_, steps_));
        gate_in[6 * c + ch] = ema_read(last.se[fphase].m1[at], lambda_se_, last.se[fphase].count);
        gate_in[7 * c + ch] =
            sigma_of(gate_in[6 * c + ch],
                     ema_read(last.se[fphase].m2[at], lambda_se_, last.se[fphase].count));
        gate_in[8 * c + ch] = hmu_st[at];
        gate_in[9 * c + ch] = hsigma_st[at];
        gate_in[10 * c + ch] = hmu_ce[at];
        gate_in[11 * c + ch] = hsigma_ce[at];
      }
      double mean_val = hm_b[0];
      double std_pre = hs_b[0];
      for (std::size_t o = 0; o < c; ++o) {
        double left = gb1 ? gb1[o] : 0.0;
        double right = gb2 ? gb2[o] : 0.0;
        const double* w1row = gw1 + o * width;
        const double* w2row = gw2 + o * width;
        for (std::size_t q = 0; q < width; ++q) {
          left += w1row[q] * gate_in[q];
          right += w2row[q] * gate_in[q];
        }
        const double s_hat = left * right;
        mean_val += hm_w[o] * s_hat;
        std_pre += hs_w[o] * s_hat;
      }
      const bool identity = model_->norm_mean.empty();
      const double scale_v = identity ? 1.0 : model_->norm_std[v];
      const double shift_v = identity ? 0.0 : model_->norm_mean[v];
      const std::size_t out_at = v * static_cast<std::size_t>(horizons) + (i - 1);
      f.mean[out_at] = mean_val * scale_v + shift_v;
      f.std[out_at] = softplus_stable(std_pre) * scale_v;
    }
  }
  return f;
}

}  // namespace scnn
