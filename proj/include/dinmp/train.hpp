// Copyright (C) 2026 The DINMP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "dinmp/batch.hpp"
#include "dinmp/config.hpp"
#include "dinmp/metrics.hpp"
#include "dinmp/model.hpp"

namespace dinmp {

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> eval_auc;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  explicit NonFiniteLoss(std::int64_t step)
      : std::runtime_error("non-finite training loss at step " + std::to_string(step)), step_(step) {}
  std::int64_t step() const { return step_; }

 private:
  std::int64_t step_;
};

inline std::size_t batch_rows(const BatchFile& b) { return b.sparse.batch_size(); }

/// Predictions for a whole batch file, evaluated in chunks.
inline std::vector<double> predict_all(const InterestModel& model, const ParameterStore& store, const BatchFile& data,
                                       std::size_t chunk = 2048) {
  const std::size_t n = batch_rows(data);
  std::vector<double> out;
  out.reserve(n);
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < n; start += chunk) {
    rows.resize(std::min(chunk, n - start));
    std::iota(rows.begin(), rows.end(), start);
    std::vector<double> p;
    if (model.layout().dense_input) {
      if (!data.dense) throw std::invalid_argument("DIN needs a batch file with dense sequences");
      p = model.predict(store, slice(*data.dense, rows));
    } else {
      p = model.predict(store, slice(data.sparse, rows));
    }
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

struct EvalReport {
  std::optional<double> auc;  // empty when one class is missing
  std::string auc_error;
  double log_loss = 0.0;
  std::size_t num_samples = 0;
  std::size_t num_positive = 0;
  std::size_t num_negative = 0;
};

inline EvalReport evaluate(const InterestModel& model, const ParameterStore& store, const BatchFile& data) {
  const auto probs = predict_all(model, store, data);
  const auto& labels = data.sparse.labels;
  EvalReport r;
  r.num_samples = probs.size();
  r.num_positive = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  r.num_negative = r.num_samples - r.num_positive;
  r.log_loss = log_loss(probs, labels);
  try {
    r.auc = auc(probs, labels);
  } catch (const std::invalid_argument& e) {
    r.auc_error = e.what();
  }
  return r;
}

struct TrainOptions {
  AdamOptions adam;
  std::size_t epochs = 5;
  std::size_t batch_size = 256;
  std::uint64_t shuffle_seed = 1;
};

inline TrainOptions train_options(const RunConfig& rc) { return {rc.train.adam, rc.train.epochs, rc.train.batch_size, rc.seed}; }

/// Mini-batch Adam on mean binary cross-entropy. Deterministic for a given
/// (model seed, shuffle seed, data).
inline std::vector<EpochLog> train(const InterestModel& model, ParameterStore& store, const BatchFile& data,
                                   const TrainOptions& opt, const BatchFile* validation = nullptr,
                                   const std::function<void(const EpochLog&)>& on_epoch = {}) {
  const std::size_t n = batch_rows(data);
  if (n == 0) throw std::invalid_argument("train: empty training set");
  if (model.layout().dense_input && !data.dense) throw std::invalid_argument("DIN needs a batch file with dense sequences");
  std::mt19937_64 rng(opt.shuffle_seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<EpochLog> log;
  store.zero_grad();
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < n; start += opt.batch_size) {
      const std::span<const std::size_t> rows(order.data() + start, std::min(opt.batch_size, n - start));
      const double loss = model.layout().dense_input ? model.loss_and_grad(store, slice(*data.dense, rows))
                                                     : model.loss_and_grad(store, slice(data.sparse, rows));
      if (!std::isfinite(loss)) throw NonFiniteLoss(store.step());
      adam_step(store, opt.adam);
      loss_sum += loss * static_cast<double>(rows.size());
      seen += rows.size();
    }
    EpochLog entry{epoch + 1, loss_sum / static_cast<double>(seen), std::nullopt};
    if (validation) entry.eval_auc = evaluate(model, store, *validation).auc;
    if (on_epoch) on_epoch(entry);
    log.push_back(entry);
  }
  return log;
}

/// Rows of `data` whose sample satisfies `keep`.
template <class Pred>
BatchFile filter_rows(const BatchFile& data, Pred keep) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < batch_rows(data); ++i) {
    if (keep(i)) rows.push_back(i);
  }
  BatchFile out;
  out.schemes = data.schemes;
  out.sparse = slice(data.sparse, rows);
  if (data.dense) out.dense = slice(*data.dense, rows);
  return out;
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

struct AblationRow {
  ModelVariant variant;
  double auc = 0.0;
  double rela_impr = 0.0;  // vs DIN, percent
  double log_loss = 0.0;
};

/// Trains every variant on `train_data` with the same seed and reports test
/// AUC with RelaImpr against DIN.
inline std::vector<AblationRow> run_ablation(const RunConfig& rc, const BatchFile& train_data,
                                             const BatchFile& test_data,
                                             std::span<const ModelVariant> variants = kAllVariants,
                                             const std::function<void(const AblationRow&)>& on_row = {}) {
  std::vector<AblationRow> rows;
  for (const auto v : variants) {
    RunConfig cfg = rc;
    cfg.model.variant = v;
    const InterestModel model(resolve_model_config(cfg, train_data, test_data));
    ParameterStore store = model.init_params();
    train(model, store, train_data, train_options(cfg));
    const EvalReport r = evaluate(model, store, test_data);
    if (!r.auc) throw std::runtime_error("ablation: " + r.auc_error);
    rows.push_back({v, *r.auc, 0.0, r.log_loss});
    if (on_row) on_row(rows.back());
  }
  const auto base = std::find_if(rows.begin(), rows.end(), [](const auto& r) { return r.variant == ModelVariant::din; });
  if (base != rows.end()) {
    const double base_auc = base->auc;
    for (auto& r : rows) r.rela_impr = round2(rela_impr(r.auc, base_auc));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Time factors
// ---------------------------------------------------------------------------

struct TimeFactorRow {
  std::size_t bucket = 0;
  std::string label;
  double factor = 0.0;        // θ_k itself (d_θ = 1) or mean θ_jᵀθ_k over behaviors
  // Mean |a'| gained over the same attention with p_t = 0, with each sampled
  // behavior placed in bucket k. The sign of a' itself is not identifiable
  // (the MLP absorbs a global flip of the pooled vector), its magnitude is.
  double contribution = 0.0;
};

inline std::string format_days(std::int64_t seconds) {
  const double days = static_cast<double>(seconds) / kSecondsPerDay;
  char buf[32];
  if (days == std::floor(days)) {
    std::snprintf(buf, sizeof buf, "%lldd", static_cast<long long>(days));
  } else {
    std::snprintf(buf, sizeof buf, "%gd", days);
  }
  return buf;
}

inline std::string time_bucket_label(const TimeBucketScheme& scheme, std::size_t k) {
  const auto& b = scheme.boundaries();
  if (k == 0) return "<=" + format_days(b.front());
  if (k >= b.size()) return ">" + format_days(b.back());
  return format_days(b[k - 1]) + "-" + format_days(b[k]);
}

/// Per-bucket time factors, most recent bucket first.
///
/// With a behavior sample (`data`), θ_j comes from its entries and the
/// contribution uses each entry's own p_a, p_c and p_α; without one, θ_j runs
/// over the whole key table and p_a = p_c = p_α = 1.
inline std::vector<TimeFactorRow> export_time_factors(const InterestModel& model, const ParameterStore& store,
                                                      const TimeBucketScheme& scheme, const BatchFile* data = nullptr,
                                                      std::size_t max_samples = 4096) {
  namespace pn = param_names;
  if (!model.layout().combiner) {
    throw std::invalid_argument(std::string(to_string(model.config().variant)) + " has no time factors");
  }
  const auto& cfg = model.config();
  const Tensor& time_table = store.value(pn::kTimeFactor);
  const auto& w = store.value(pn::kCombiner).values();
  const std::size_t t = time_table.rows();

  Tensor e;
  std::vector<double> pa, pc, pal;
  if (data) {
    std::vector<std::size_t> rows(std::min(max_samples, batch_rows(*data)));
    std::iota(rows.begin(), rows.end(), 0);
    ForwardCache cache;
    model.forward(store, slice(data->sparse, rows), cache);
    e = cache.e;
    pa = cache.pa.values();
    pc = cache.factors.count;
    pal = cache.factors.category;
  } else {
    e = store.value(pn::kKeyEmbedding);
    pa.assign(e.rows(), 1.0);
    pc.assign(e.rows(), 1.0);
    pal.assign(e.rows(), 1.0);
  }
  const Tensor theta = matmul(e, store.value(pn::kProjection));
  const std::size_t n = e.rows();

  std::vector<TimeFactorRow> rows;
  for (std::size_t k = 0; k < t; ++k) {
    TimeFactorRow row;
    row.bucket = k;
    row.label = time_bucket_label(scheme, k);
    const auto tk = time_table.row(k);
    double factor_sum = 0.0, contribution_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double pt = cfg.time_factor_from_embedding ? dot(e.row(j), tk) : dot(theta.row(j), tk);
      const double coef = w[1] + w[4] * pc[j] * pal[j] + w[5] * pa[j] * pc[j] * pal[j];
      const double without_time = w[0] * pa[j] + w[2] * pc[j] + w[3] * pal[j];
      factor_sum += pt;
      contribution_sum += std::abs(without_time + coef * pt) - std::abs(without_time);
    }
    row.factor = (cfg.factor_dim == 1 && !cfg.time_factor_from_embedding) ? tk[0]
                 : n                                                  ? factor_sum / static_cast<double>(n)
                                                                      : 0.0;
    row.contribution = n ? contribution_sum / static_cast<double>(n) : 0.0;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace dinmp
