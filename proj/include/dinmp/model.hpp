// Copyright (C) 2026 The DINMP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dinmp/batch.hpp"
#include "dinmp/metrics.hpp"
#include "dinmp/ops.hpp"
#include "dinmp/params.hpp"
#include "dinmp/tensor.hpp"

namespace dinmp {

// ---------------------------------------------------------------------------
// Variants
// ---------------------------------------------------------------------------

/// The ablation ladder, each step adding one mechanism:
///   din     dense truncated sequence, base attention
///   dinskv  sparse key-vector input, count multiplier
///   edin    time/count/category factors in the attention
///   dintp   + time-bucket partition pooling
///   dinmp   + category partition pooling
enum class ModelVariant { din, dinskv, edin, dintp, dinmp };

enum class Interaction { concat, self_attention };

inline constexpr std::array<ModelVariant, 5> kAllVariants = {ModelVariant::din, ModelVariant::dinskv, ModelVariant::edin,
                                                             ModelVariant::dintp, ModelVariant::dinmp};

inline std::string_view to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::din: return "DIN";
    case ModelVariant::dinskv: return "DINSKV";
    case ModelVariant::edin: return "EDIN";
    case ModelVariant::dintp: return "DINTP";
    case ModelVariant::dinmp: return "DINMP";
  }
  return "DIN";
}

inline ModelVariant parse_variant(std::string_view s) {
  std::string up(s);
  for (auto& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (auto v : kAllVariants) {
    if (to_string(v) == up) return v;
  }
  throw std::invalid_argument("unknown model variant '" + std::string(s) + "'");
}

inline std::string_view to_string(Interaction m) { return m == Interaction::concat ? "concat" : "self_attention"; }

inline Interaction parse_interaction(std::string_view s) {
  if (s == "concat") return Interaction::concat;
  if (s == "self_attention") return Interaction::self_attention;
  throw std::invalid_argument("unknown interaction mode '" + std::string(s) + "'");
}

struct ModelConfig {
  ModelVariant variant = ModelVariant::dinmp;
  std::size_t num_keys = 1;
  std::size_t num_categories = 1;
  std::size_t num_other_ids = 1;  // shared vocabulary of the other-feature fields
  std::size_t num_fields = 0;     // F
  std::size_t time_buckets = 10;
  std::size_t count_buckets = 6;
  std::size_t embedding_dim = 8;
  std::size_t other_dim = 4;
  std::size_t attention_hidden = 36;
  std::size_t factor_dim = 4;
  std::vector<std::size_t> mlp_layers = {128, 256, 80, 256};
  Interaction interaction = Interaction::concat;
  bool use_time = true;
  bool use_count = true;
  bool use_category = true;
  // p_t = e_jᵀθ_k instead of θ_jᵀθ_k; θ_time rows then have embedding width.
  bool time_factor_from_embedding = false;
  // Variant defaults apply when unset.
  std::optional<bool> count_multiplier;
  std::optional<bool> time_partition;
  std::optional<bool> category_partition;
  std::uint64_t seed = 1;
};

/// Structural switches after applying variant defaults and overrides.
struct ModelLayout {
  bool dense_input = false;
  bool count_multiplier = false;
  bool combiner = false;
  bool time_partition = false;
  bool category_partition = false;
};

inline ModelLayout resolve_layout(const ModelConfig& c) {
  ModelLayout l;
  switch (c.variant) {
    case ModelVariant::din: l = {true, false, false, false, false}; break;
    case ModelVariant::dinskv: l = {false, true, false, false, false}; break;
    case ModelVariant::edin: l = {false, false, true, false, false}; break;
    case ModelVariant::dintp: l = {false, false, true, true, false}; break;
    case ModelVariant::dinmp: l = {false, false, true, true, true}; break;
  }
  if (c.count_multiplier) l.count_multiplier = *c.count_multiplier;
  if (c.time_partition) l.time_partition = *c.time_partition;
  if (c.category_partition) l.category_partition = *c.category_partition;
  if (l.dense_input && (l.count_multiplier || l.time_partition || l.category_partition)) {
    throw std::invalid_argument("DIN takes plain dense sequences: no count multiplier or partitions");
  }
  return l;
}

// ---------------------------------------------------------------------------
// Building blocks. Each is usable on its own; InterestModel composes them.
// ---------------------------------------------------------------------------

/// Rows [e, q, e⊙q, e−q] fed to the base attention MLP.
inline Tensor attention_features(const Tensor& e, const Tensor& q_expanded) {
  detail::check(e.same_shape(q_expanded), "attention_features: e and q must have the same shape");
  const std::size_t n = e.rows(), d = e.cols();
  Tensor x = Tensor::matrix(n, 4 * d);
  for (std::size_t i = 0; i < n; ++i) {
    const double* er = e.data() + i * d;
    const double* qr = q_expanded.data() + i * d;
    double* xr = x.data() + i * 4 * d;
    for (std::size_t j = 0; j < d; ++j) {
      xr[j] = er[j];
      xr[d + j] = qr[j];
      xr[2 * d + j] = er[j] * qr[j];
      xr[3 * d + j] = er[j] - qr[j];
    }
  }
  return x;
}

/// Unnormalized relevance score p_a of each behavior to its sample's target.
inline Tensor base_attention(const Mlp& mlp, const ParameterStore& store, const Tensor& e, const Tensor& q_expanded,
                             MlpCache* cache = nullptr) {
  if (e.rows() == 0) return Tensor::matrix(0, 1);
  return mlp.forward(store, attention_features(e, q_expanded), cache);
}

struct FactorTables {
  const Tensor* projection = nullptr;  // d_emb × d_θ, θ_j = e_j·P
  const Tensor* time = nullptr;        // T × d_θ (or T × d_emb in embedding mode)
  const Tensor* count = nullptr;       // Ct × d_θ
  const Tensor* category = nullptr;    // C × d_θ
};

struct FactorFlags {
  bool use_time = true;
  bool use_count = true;
  bool use_category = true;
  bool time_from_embedding = false;
};

struct Factors {
  Tensor theta;  // N × d_θ
  std::vector<double> time, count, category;
};

inline void check_bucket(std::int64_t b, std::size_t limit, const char* what) {
  if (b < 0 || static_cast<std::size_t>(b) >= limit) {
    throw std::out_of_range(std::string(what) + " bucket " + std::to_string(b) + " outside [0, " +
                            std::to_string(limit) + ")");
  }
}

/// p_t, p_c, p_α for each entry. A disabled factor is the constant 1.
inline Factors compute_factors(const Tensor& e, std::span<const std::int64_t> time_bucket,
                               std::span<const std::int64_t> count_bucket, std::span<const std::int64_t> category,
                               const FactorTables& tables, const FactorFlags& flags = {}) {
  const std::size_t n = e.rows();
  Factors f;
  f.theta = n ? matmul(e, *tables.projection) : Tensor::matrix(0, tables.projection->cols());
  f.time.assign(n, 1.0);
  f.count.assign(n, 1.0);
  f.category.assign(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto theta = f.theta.row(i);
    if (flags.use_time) {
      check_bucket(time_bucket[i], tables.time->rows(), "time");
      const auto row = tables.time->row(static_cast<std::size_t>(time_bucket[i]));
      f.time[i] = flags.time_from_embedding ? dot(e.row(i), row) : dot(theta, row);
    }
    if (flags.use_count) {
      check_bucket(count_bucket[i], tables.count->rows(), "count");
      f.count[i] = dot(theta, tables.count->row(static_cast<std::size_t>(count_bucket[i])));
    }
    if (flags.use_category) {
      check_bucket(category[i], tables.category->rows(), "category");
      f.category[i] = dot(theta, tables.category->row(static_cast<std::size_t>(category[i])));
    }
  }
  return f;
}

/// a' = w0·pa + w1·pt + w2·pc + w3·pα + w4·pt·pc·pα + w5·pa·pt·pc·pα
inline std::vector<double> combine_attention(std::span<const double> pa, std::span<const double> pt,
                                             std::span<const double> pc, std::span<const double> palpha,
                                             std::span<const double> w) {
  detail::check(w.size() == 6, "combine_attention: need six weights");
  detail::check(pt.size() == pa.size() && pc.size() == pa.size() && palpha.size() == pa.size(),
                "combine_attention: factor lengths differ");
  std::vector<double> out(pa.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const double tca = pt[i] * pc[i] * palpha[i];
    out[i] = w[0] * pa[i] + w[1] * pt[i] + w[2] * pc[i] + w[3] * palpha[i] + w[4] * tca + w[5] * pa[i] * tca;
  }
  return out;
}

/// Rows m_j·a'_j·e_j; `multiplier` empty means m_j = 1.
inline Tensor weight_rows(const Tensor& e, std::span<const double> attention, std::span<const double> multiplier = {}) {
  detail::check(attention.size() == e.rows(), "weight_rows: one attention value per row");
  detail::check(multiplier.empty() || multiplier.size() == e.rows(), "weight_rows: one multiplier per row");
  Tensor out = e;
  const std::size_t d = e.cols();
  for (std::size_t i = 0; i < e.rows(); ++i) {
    const double w = attention[i] * (multiplier.empty() ? 1.0 : multiplier[i]);
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] *= w;
  }
  return out;
}

/// ε_i = Σ_{j∈I_i} m_j·a'_j·e_j
inline Tensor weighted_pool(const Tensor& e, std::span<const double> attention, std::span<const double> multiplier,
                            std::span<const std::size_t> offsets) {
  return segment_sum(weight_rows(e, attention, multiplier), offsets);
}

struct InterestVectors {
  Tensor global;    // B × d
  Tensor time;      // B × (T·d), bucket-major within a row
  Tensor category;  // B × (C·d)
};

/// Aggregates the already-weighted rows globally, per time bucket and per
/// category. The weights are computed once upstream and shared by all three.
inline InterestVectors partition_pool(const Tensor& weighted, std::span<const std::int64_t> time_bucket,
                                      std::span<const std::int64_t> category, std::span<const std::size_t> offsets,
                                      std::size_t num_time_buckets, std::size_t num_categories) {
  validate_offsets(offsets, weighted.rows());
  const std::size_t b = offsets.size() - 1, d = weighted.cols();
  InterestVectors out;
  out.global = segment_sum(weighted, offsets);
  out.time = Tensor::matrix(b, num_time_buckets * d);
  out.category = Tensor::matrix(b, num_categories * d);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t n = offsets[i]; n < offsets[i + 1]; ++n) {
      check_bucket(time_bucket[n], num_time_buckets, "time");
      check_bucket(category[n], num_categories, "category");
      const double* src = weighted.data() + n * d;
      double* t = out.time.data() + i * num_time_buckets * d + static_cast<std::size_t>(time_bucket[n]) * d;
      double* c = out.category.data() + i * num_categories * d + static_cast<std::size_t>(category[n]) * d;
      for (std::size_t j = 0; j < d; ++j) {
        t[j] += src[j];
        c[j] += src[j];
      }
    }
  }
  return out;
}

struct InteractionWeights {
  const Tensor* wq = nullptr;
  const Tensor* wk = nullptr;
  const Tensor* wv = nullptr;
};

/// Flattened time-aligned interest sequence, optionally passed through
/// self-attention per sample. Input and output are B × (T·d).
inline Tensor interaction_layer(const Tensor& time_vectors, std::size_t num_buckets, Interaction mode,
                                const InteractionWeights& w = {}, std::vector<SelfAttentionCache>* caches = nullptr) {
  if (mode == Interaction::concat) return time_vectors;
  const std::size_t b = time_vectors.rows(), d = time_vectors.cols() / num_buckets;
  Tensor out = Tensor::matrix(b, num_buckets * d);
  if (caches) caches->assign(b, {});
  for (std::size_t i = 0; i < b; ++i) {
    Tensor x({num_buckets, d}, std::vector<double>(time_vectors.row(i).begin(), time_vectors.row(i).end()));
    Tensor y = self_attention_forward(x, *w.wq, *w.wk, *w.wv, caches ? &(*caches)[i] : nullptr);
    std::copy(y.values().begin(), y.values().end(), out.data() + i * num_buckets * d);
  }
  return out;
}

// ---------------------------------------------------------------------------
// The model
// ---------------------------------------------------------------------------

namespace param_names {
inline const std::string kKeyEmbedding = "emb/key";
inline const std::string kCategoryEmbedding = "emb/category";
inline const std::string kOtherEmbedding = "emb/other";
inline const std::string kProjection = "factor/projection";
inline const std::string kTimeFactor = "factor/time";
inline const std::string kCountFactor = "factor/count";
inline const std::string kCategoryFactor = "factor/category";
inline const std::string kCombiner = "combiner/w";
inline const std::string kQuery = "interaction/wq";
inline const std::string kKey = "interaction/wk";
inline const std::string kValue = "interaction/wv";
}  // namespace param_names

/// Stable per-name seed so a parameter shared by two variants starts from the
/// same values under the same model seed.
inline std::uint64_t param_seed(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h ^ (seed * 0x9E3779B97F4A7C15ull);
}

/// Everything the backward pass needs from one forward pass.
struct ForwardCache {
  std::size_t batch = 0;
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> segment;  // entry → sample
  std::vector<std::int64_t> keys, time_bucket, count_bucket, category;
  std::vector<double> multiplier;
  std::vector<std::int64_t> target_key, target_category, other;
  std::vector<std::uint8_t> labels;

  Tensor e, q, q_expanded;
  MlpCache attention_cache;
  Tensor pa;
  Factors factors;
  std::vector<double> attention;  // a'
  Tensor weighted;
  InterestVectors interest;
  Tensor time_out;
  std::vector<SelfAttentionCache> interaction_caches;
  Tensor category_emb, other_emb;
  Tensor features;
  MlpCache head_cache;
  std::vector<double> probabilities;
};

class InterestModel {
 public:
  explicit InterestModel(ModelConfig config) : config_(std::move(config)), layout_(resolve_layout(config_)) {
    detail::check(config_.embedding_dim > 0 && config_.other_dim > 0, "ModelConfig: embedding dims must be positive");
    detail::check(config_.factor_dim >= 1, "ModelConfig: factor_dim must be >= 1");
    detail::check(config_.attention_hidden >= 1, "ModelConfig: attention_hidden must be >= 1");
    detail::check(config_.num_keys >= 1 && config_.num_categories >= 1 && config_.num_other_ids >= 1,
                  "ModelConfig: vocabularies must be nonempty");
    detail::check(config_.time_buckets >= 1 && config_.count_buckets >= 1, "ModelConfig: bucket counts must be >= 1");
    const std::size_t d = config_.embedding_dim;
    attention_mlp_ = Mlp("attention", {4 * d, config_.attention_hidden, 1}, {Activation::relu, Activation::identity});
    std::vector<std::size_t> widths{feature_width()};
    std::vector<Activation> acts;
    for (auto w : config_.mlp_layers) {
      widths.push_back(w);
      acts.push_back(Activation::relu);
    }
    widths.push_back(1);
    acts.push_back(Activation::identity);
    head_mlp_ = Mlp("head", widths, acts);
  }

  const ModelConfig& config() const { return config_; }
  const ModelLayout& layout() const { return layout_; }
  const Mlp& attention_mlp() const { return attention_mlp_; }
  const Mlp& head_mlp() const { return head_mlp_; }

  std::size_t feature_width() const {
    const std::size_t d = config_.embedding_dim;
    std::size_t w = d + d + config_.other_dim + config_.num_fields * config_.other_dim;
    if (layout_.time_partition) w += config_.time_buckets * d;
    if (layout_.category_partition) w += config_.num_categories * d;
    return w;
  }

  FactorFlags factor_flags() const {
    return {config_.use_time, config_.use_count, config_.use_category, config_.time_factor_from_embedding};
  }

  ParameterStore init_params() const {
    ParameterStore store;
    auto rng_for = [&](const std::string& name) { return std::mt19937_64(param_seed(config_.seed, name)); };
    const std::size_t d = config_.embedding_dim, dt = config_.factor_dim;
    auto add_embedding = [&](const std::string& name, std::size_t rows, std::size_t dim) {
      auto rng = rng_for(name);
      store.add(name, init_embedding(rows, dim, rng));
    };
    add_embedding(param_names::kKeyEmbedding, config_.num_keys, d);
    add_embedding(param_names::kCategoryEmbedding, config_.num_categories, config_.other_dim);
    add_embedding(param_names::kOtherEmbedding, config_.num_other_ids, config_.other_dim);
    {
      auto rng = rng_for("attention");
      attention_mlp_.register_params(store, rng);
    }
    {
      auto rng = rng_for("head");
      head_mlp_.register_params(store, rng);
    }
    if (layout_.combiner) {
      add_embedding(param_names::kProjection, d, dt);
      add_embedding(param_names::kTimeFactor, config_.time_buckets, config_.time_factor_from_embedding ? d : dt);
      add_embedding(param_names::kCountFactor, config_.count_buckets, dt);
      add_embedding(param_names::kCategoryFactor, config_.num_categories, dt);
      store.add(param_names::kCombiner, Tensor({1, 6}, {1.0, 0.0, 0.0, 0.0, 0.0, 0.0}));
    }
    if (layout_.time_partition && config_.interaction == Interaction::self_attention) {
      for (const auto* name : {&param_names::kQuery, &param_names::kKey, &param_names::kValue}) {
        auto rng = rng_for(*name);
        store.add(*name, init_glorot(d, d, rng));
      }
    }
    return store;
  }

  /// Click probabilities; fills `cache` for a subsequent backward().
  std::vector<double> forward(const ParameterStore& store, const SparseBatch& batch, ForwardCache& cache) const {
    if (layout_.dense_input) throw std::invalid_argument("DIN expects a dense sequence batch, got a sparse batch");
    batch.validate();
    cache = ForwardCache{};
    cache.batch = batch.batch_size();
    cache.offsets = batch.row_offsets;
    cache.keys = batch.keys;
    cache.time_bucket = batch.time_bucket;
    cache.count_bucket = batch.count_bucket;
    cache.category = batch.category;
    if (layout_.count_multiplier) cache.multiplier.assign(batch.counts.begin(), batch.counts.end());
    copy_sample_columns(batch, cache);
    run_forward(store, cache);
    return cache.probabilities;
  }

  std::vector<double> forward(const ParameterStore& store, const DenseBatch& batch, ForwardCache& cache) const {
    if (!layout_.dense_input) {
      throw std::invalid_argument(std::string(to_string(config_.variant)) + " expects a sparse key-vector batch");
    }
    cache = ForwardCache{};
    const std::size_t b = batch.batch_size(), len = batch.max_len;
    detail::check(batch.keys.size() == b * len, "DenseBatch: keys must be B×max_len");
    cache.batch = b;
    cache.keys = batch.keys;
    cache.offsets.resize(b + 1);
    cache.multiplier.assign(b * len, 0.0);
    for (std::size_t i = 0; i <= b; ++i) cache.offsets[i] = i * len;
    for (std::size_t i = 0; i < b; ++i) {
      detail::check(batch.lengths[i] <= len, "DenseBatch: length exceeds max_len");
      for (std::size_t l = 0; l < batch.lengths[i]; ++l) cache.multiplier[i * len + l] = 1.0;
    }
    copy_sample_columns(batch, cache);
    run_forward(store, cache);
    return cache.probabilities;
  }

  template <class Batch>
  std::vector<double> predict(const ParameterStore& store, const Batch& batch) const {
    ForwardCache cache;
    return forward(store, batch, cache);
  }

  /// Mean binary cross-entropy of the cached forward pass.
  static double loss(const ForwardCache& cache) { return log_loss(cache.probabilities, cache.labels); }

  /// Accumulates d(mean BCE)/dθ into the store gradients.
  void backward(ParameterStore& store, const ForwardCache& c) const;

  template <class Batch>
  double loss_and_grad(ParameterStore& store, const Batch& batch) const {
    ForwardCache cache;
    forward(store, batch, cache);
    backward(store, cache);
    return loss(cache);
  }

 private:
  template <class Batch>
  void copy_sample_columns(const Batch& batch, ForwardCache& c) const {
    const std::size_t b = batch.batch_size();
    detail::check(batch.num_fields == config_.num_fields, "batch has " + std::to_string(batch.num_fields) +
                                                              " other-feature fields, model expects " +
                                                              std::to_string(config_.num_fields));
    c.target_key = batch.target_key;
    c.target_category = batch.target_category;
    c.other = batch.other_features;
    c.labels = batch.labels;
    c.segment.resize(c.keys.size());
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t n = c.offsets[i]; n < c.offsets[i + 1]; ++n) c.segment[n] = i;
    }
  }

  void run_forward(const ParameterStore& store, ForwardCache& c) const;

  ModelConfig config_;
  ModelLayout layout_;
  Mlp attention_mlp_;
  Mlp head_mlp_;
};

inline void InterestModel::run_forward(const ParameterStore& store, ForwardCache& c) const {
  namespace pn = param_names;
  const std::size_t b = c.batch, n = c.keys.size(), d = config_.embedding_dim, od = config_.other_dim;
  const std::size_t t = config_.time_buckets, nc = config_.num_categories;

  c.e = embedding_lookup(store.value(pn::kKeyEmbedding), c.keys);
  c.q = embedding_lookup(store.value(pn::kKeyEmbedding), c.target_key);
  c.q_expanded = Tensor::matrix(n, d);
  for (std::size_t j = 0; j < n; ++j) {
    const auto src = c.q.row(c.segment[j]);
    std::copy(src.begin(), src.end(), c.q_expanded.data() + j * d);
  }
  c.pa = base_attention(attention_mlp_, store, c.e, c.q_expanded, &c.attention_cache);

  if (layout_.combiner) {
    const FactorTables tables{&store.value(pn::kProjection), &store.value(pn::kTimeFactor),
                              &store.value(pn::kCountFactor), &store.value(pn::kCategoryFactor)};
    c.factors = compute_factors(c.e, c.time_bucket, c.count_bucket, c.category, tables, factor_flags());
    c.attention = combine_attention(c.pa.values(), c.factors.time, c.factors.count, c.factors.category,
                                    store.value(pn::kCombiner).values());
  } else {
    c.attention = c.pa.values();
  }
  c.weighted = weight_rows(c.e, c.attention, c.multiplier);

  if (layout_.time_partition || layout_.category_partition) {
    c.interest = partition_pool(c.weighted, c.time_bucket, c.category, c.offsets, t, nc);
  } else {
    c.interest.global = segment_sum(c.weighted, c.offsets);
  }
  if (layout_.time_partition) {
    InteractionWeights iw;
    if (config_.interaction == Interaction::self_attention) {
      iw = {&store.value(pn::kQuery), &store.value(pn::kKey), &store.value(pn::kValue)};
    }
    c.time_out = interaction_layer(c.interest.time, t, config_.interaction, iw, &c.interaction_caches);
  }

  c.category_emb = embedding_lookup(store.value(pn::kCategoryEmbedding), c.target_category);
  c.other_emb = embedding_lookup(store.value(pn::kOtherEmbedding), c.other);

  const std::size_t width = feature_width();
  c.features = Tensor::matrix(b, width);
  for (std::size_t i = 0; i < b; ++i) {
    double* out = c.features.data() + i * width;
    auto put = [&out](std::span<const double> src) { out = std::copy(src.begin(), src.end(), out); };
    put(c.interest.global.row(i));
    if (layout_.time_partition) put(c.time_out.row(i));
    if (layout_.category_partition) put(c.interest.category.row(i));
    put(c.q.row(i));
    put(c.category_emb.row(i));
    put({c.other_emb.data() + i * config_.num_fields * od, config_.num_fields * od});
  }
  const Tensor logits = head_mlp_.forward(store, c.features, &c.head_cache);
  c.probabilities.resize(b);
  for (std::size_t i = 0; i < b; ++i) c.probabilities[i] = sigmoid(logits[i]);
}

inline void InterestModel::backward(ParameterStore& store, const ForwardCache& c) const {
  namespace pn = param_names;
  const std::size_t b = c.batch, n = c.keys.size(), d = config_.embedding_dim, od = config_.other_dim;
  const std::size_t t = config_.time_buckets, nc = config_.num_categories, f = config_.num_fields;

  // d(mean BCE)/d logit = (p − y)/B. Clipping in the loss only matters for
  // saturated probabilities, where this expression is the one-sided limit.
  Tensor dlogit = Tensor::matrix(b, 1);
  for (std::size_t i = 0; i < b; ++i) {
    dlogit[i] = (c.probabilities[i] - static_cast<double>(c.labels[i])) / static_cast<double>(b);
  }
  const Tensor dfeat = head_mlp_.backward(store, c.head_cache, dlogit);

  const std::size_t width = feature_width();
  Tensor dglobal = Tensor::matrix(b, d), dtime_out, dcategory, dq = Tensor::matrix(b, d);
  Tensor dcat_emb = Tensor::matrix(b, od), dother = Tensor::matrix(b * f, od);
  if (layout_.time_partition) dtime_out = Tensor::matrix(b, t * d);
  if (layout_.category_partition) dcategory = Tensor::matrix(b, nc * d);
  for (std::size_t i = 0; i < b; ++i) {
    const double* in = dfeat.data() + i * width;
    auto take = [&in](double* dst, std::size_t len) {
      std::copy(in, in + len, dst);
      in += len;
    };
    take(dglobal.data() + i * d, d);
    if (layout_.time_partition) take(dtime_out.data() + i * t * d, t * d);
    if (layout_.category_partition) take(dcategory.data() + i * nc * d, nc * d);
    take(dq.data() + i * d, d);
    take(dcat_emb.data() + i * od, od);
    take(dother.data() + i * f * od, f * od);
  }
  embedding_lookup_backward(store.grad(pn::kCategoryEmbedding), c.target_category, dcat_emb);
  embedding_lookup_backward(store.grad(pn::kOtherEmbedding), c.other, dother);

  Tensor dtime;
  if (layout_.time_partition) {
    if (config_.interaction == Interaction::self_attention) {
      dtime = Tensor::matrix(b, t * d);
      const Tensor &wq = store.value(pn::kQuery), &wk = store.value(pn::kKey), &wv = store.value(pn::kValue);
      for (std::size_t i = 0; i < b; ++i) {
        Tensor dy({t, d}, std::vector<double>(dtime_out.row(i).begin(), dtime_out.row(i).end()));
        const Tensor dx = self_attention_backward(c.interaction_caches[i], wq, wk, wv, dy, store.grad(pn::kQuery),
                                                  store.grad(pn::kKey), store.grad(pn::kValue));
        std::copy(dx.values().begin(), dx.values().end(), dtime.data() + i * t * d);
      }
    } else {
      dtime = std::move(dtime_out);
    }
  }

  // Gradient of each weighted row m_j·a'_j·e_j collects from every pool it fed.
  Tensor de = Tensor::matrix(n, d);
  std::vector<double> dattention(n, 0.0);
  std::vector<double> g(d);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t i = c.segment[j];
    for (std::size_t k = 0; k < d; ++k) g[k] = dglobal(i, k);
    if (layout_.time_partition) {
      const double* src = dtime.data() + i * t * d + static_cast<std::size_t>(c.time_bucket[j]) * d;
      for (std::size_t k = 0; k < d; ++k) g[k] += src[k];
    }
    if (layout_.category_partition) {
      const double* src = dcategory.data() + i * nc * d + static_cast<std::size_t>(c.category[j]) * d;
      for (std::size_t k = 0; k < d; ++k) g[k] += src[k];
    }
    const double m = c.multiplier.empty() ? 1.0 : c.multiplier[j];
    const double w = m * c.attention[j];
    double ge = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      de(j, k) = w * g[k];
      ge += g[k] * c.e(j, k);
    }
    dattention[j] = m * ge;
  }

  Tensor dpa = Tensor::matrix(n, 1);
  if (layout_.combiner) {
    const auto& w = store.value(pn::kCombiner).values();
    auto& dw = store.grad(pn::kCombiner).values();
    const FactorFlags flags = factor_flags();
    const auto &pt = c.factors.time, &pc = c.factors.count, &pal = c.factors.category;
    const Tensor& projection = store.value(pn::kProjection);
    const Tensor& time_table = store.value(pn::kTimeFactor);
    const Tensor& count_table = store.value(pn::kCountFactor);
    const Tensor& cat_table = store.value(pn::kCategoryFactor);
    Tensor& dtime_table = store.grad(pn::kTimeFactor);
    Tensor& dcount_table = store.grad(pn::kCountFactor);
    Tensor& dcat_table = store.grad(pn::kCategoryFactor);
    const std::size_t dt = config_.factor_dim;
    Tensor dtheta = Tensor::matrix(n, dt);
    for (std::size_t j = 0; j < n; ++j) {
      const double g = dattention[j];
      const double pa = c.pa[j];
      const double tca = pt[j] * pc[j] * pal[j];
      dw[0] += g * pa;
      dw[1] += g * pt[j];
      dw[2] += g * pc[j];
      dw[3] += g * pal[j];
      dw[4] += g * tca;
      dw[5] += g * pa * tca;
      dpa[j] = g * (w[0] + w[5] * tca);
      const auto theta = c.factors.theta.row(j);
      auto dth = dtheta.row(j);
      if (flags.use_time) {
        const double gt = g * (w[1] + w[4] * pc[j] * pal[j] + w[5] * pa * pc[j] * pal[j]);
        const auto tb = static_cast<std::size_t>(c.time_bucket[j]);
        const auto row = time_table.row(tb);
        auto drow = dtime_table.row(tb);
        if (flags.time_from_embedding) {
          for (std::size_t k = 0; k < d; ++k) {
            de(j, k) += gt * row[k];
            drow[k] += gt * c.e(j, k);
          }
        } else {
          for (std::size_t k = 0; k < dt; ++k) {
            dth[k] += gt * row[k];
            drow[k] += gt * theta[k];
          }
        }
      }
      if (flags.use_count) {
        const double gc = g * (w[2] + w[4] * pt[j] * pal[j] + w[5] * pa * pt[j] * pal[j]);
        const auto cb = static_cast<std::size_t>(c.count_bucket[j]);
        const auto row = count_table.row(cb);
        auto drow = dcount_table.row(cb);
        for (std::size_t k = 0; k < dt; ++k) {
          dth[k] += gc * row[k];
          drow[k] += gc * theta[k];
        }
      }
      if (flags.use_category) {
        const double ga = g * (w[3] + w[4] * pt[j] * pc[j] + w[5] * pa * pt[j] * pc[j]);
        const auto cat = static_cast<std::size_t>(c.category[j]);
        const auto row = cat_table.row(cat);
        auto drow = dcat_table.row(cat);
        for (std::size_t k = 0; k < dt; ++k) {
          dth[k] += ga * row[k];
          drow[k] += ga * theta[k];
        }
      }
    }
    if (n) {
      matmul_at_b_acc(c.e, dtheta, store.grad(pn::kProjection));
      add_inplace(de, matmul_a_bt(dtheta, projection));
    }
  } else {
    std::copy(dattention.begin(), dattention.end(), dpa.data());
  }

  if (n) {
    const Tensor dfeatures = attention_mlp_.backward(store, c.attention_cache, dpa);
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t i = c.segment[j];
      const double* g = dfeatures.data() + j * 4 * d;
      for (std::size_t k = 0; k < d; ++k) {
        const double e = c.e(j, k), q = c.q_expanded(j, k);
        de(j, k) += g[k] + g[2 * d + k] * q + g[3 * d + k];
        dq(i, k) += g[d + k] + g[2 * d + k] * e - g[3 * d + k];
      }
    }
  }
  embedding_lookup_backward(store.grad(pn::kKeyEmbedding), c.keys, de);
  embedding_lookup_backward(store.grad(pn::kKeyEmbedding), c.target_key, dq);
}

}  // namespace dinmp
