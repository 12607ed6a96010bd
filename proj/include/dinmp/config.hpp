// Copyright (C) 2026 The DINMP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "dinmp/batch.hpp"
#include "dinmp/events.hpp"
#include "dinmp/model.hpp"
#include "dinmp/params.hpp"
#include "dinmp/synth.hpp"

namespace dinmp {

using Json = nlohmann::json;

struct TrainConfig {
  AdamOptions adam;
  std::size_t epochs = 5;
  std::size_t batch_size = 256;
};

struct DataConfig {
  std::vector<double> time_boundaries_days = {1, 2, 4, 7, 14, 30, 60, 90, 180};
  std::vector<std::int64_t> count_boundaries = {2, 4, 8, 16, 32};
  std::vector<std::string> event_types = {"click"};
  std::size_t truncate_len = 20;
  std::vector<std::int64_t> key_thresholds = {400, 500};
  std::vector<std::int64_t> behavior_thresholds = {200, 400};

  BucketSchemes schemes() const {
    return {TimeBucketScheme::from_days(time_boundaries_days), CountBucketScheme(count_boundaries)};
  }
  EventTypeFilter type_filter() const {
    EventTypeFilter f;
    for (const auto& t : event_types) f.insert(parse_event_type(t));
    if (f.empty()) throw std::invalid_argument("data.event_types must not be empty");
    return f;
  }
};

/// Everything a command needs. Model vocabulary sizes of 0 are inferred from
/// the data the first time a model is built.
struct RunConfig {
  std::uint64_t seed = 1;
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  GeneratorConfig generator;

  RunConfig() {
    model.num_keys = 0;
    model.num_categories = 0;
    model.num_other_ids = 0;
  }
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void reject_unknown(const Json& j, const std::string& section, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown config field '" + section + (section.empty() ? "" : ".") + key + "'");
  }
}

template <class T>
void read_field(const Json& j, const char* key, T& out, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError("config field '" + section + "." + key + "': " + e.what());
  }
}

inline void read_optional_bool(const Json& j, const char* key, std::optional<bool>& out) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) {
    out.reset();
  } else if (j.at(key).is_boolean()) {
    out = j.at(key).get<bool>();
  } else {
    throw ConfigError(std::string("config field 'model.") + key + "' must be a boolean or null");
  }
}

inline Json optional_bool_json(const std::optional<bool>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace detail

inline Json to_json(const RunConfig& c) {
  const auto& m = c.model;
  Json model = {
      {"variant", std::string(to_string(m.variant))},
      {"num_keys", m.num_keys},
      {"num_categories", m.num_categories},
      {"num_other_ids", m.num_other_ids},
      {"num_fields", m.num_fields},
      {"embedding_dim", m.embedding_dim},
      {"other_dim", m.other_dim},
      {"attention_hidden", m.attention_hidden},
      {"factor_dim", m.factor_dim},
      {"mlp_layers", m.mlp_layers},
      {"interaction", std::string(to_string(m.interaction))},
      {"use_time", m.use_time},
      {"use_count", m.use_count},
      {"use_category", m.use_category},
      {"time_factor_from_embedding", m.time_factor_from_embedding},
      {"count_multiplier", detail::optional_bool_json(m.count_multiplier)},
      {"time_partition", detail::optional_bool_json(m.time_partition)},
      {"category_partition", detail::optional_bool_json(m.category_partition)},
  };
  Json train = {{"lr", c.train.adam.lr},         {"beta1", c.train.adam.beta1},
                {"beta2", c.train.adam.beta2},   {"epsilon", c.train.adam.epsilon},
                {"epochs", c.train.epochs},      {"batch_size", c.train.batch_size}};
  Json data = {{"time_boundaries_days", c.data.time_boundaries_days},
               {"count_boundaries", c.data.count_boundaries},
               {"event_types", c.data.event_types},
               {"truncate_len", c.data.truncate_len},
               {"key_thresholds", c.data.key_thresholds},
               {"behavior_thresholds", c.data.behavior_thresholds}};
  const auto& g = c.generator;
  Json gen = {{"num_users", g.num_users},
              {"num_keys", g.num_keys},
              {"num_categories", g.num_categories},
              {"horizon_days", g.horizon_days},
              {"sample_days", g.sample_days},
              {"activity_rate", g.activity_rate},
              {"duplication", g.duplication},
              {"repeat_spread_days", g.repeat_spread_days},
              {"recency_half_life_days", g.recency_half_life_days},
              {"drift_rate", g.drift_rate},
              {"favorite_categories", g.favorite_categories},
              {"negatives_per_positive", g.negatives_per_positive},
              {"label_sharpness", g.label_sharpness},
              {"target_from_preference", g.target_from_preference},
              {"samples_per_user", g.samples_per_user},
              {"num_profile_ids", g.num_profile_ids},
              {"epoch", g.epoch}};
  return {{"seed", c.seed}, {"model", model}, {"train", train}, {"data", data}, {"generator", gen}};
}

/// Parses and validates a config; unknown fields anywhere are rejected.
inline RunConfig run_config_from_json(const Json& j) {
  RunConfig c;
  detail::reject_unknown(j, "", {"seed", "variant", "model", "train", "data", "generator"});
  detail::read_field(j, "seed", c.seed, "");
  if (j.contains("variant")) c.model.variant = parse_variant(j.at("variant").get<std::string>());

  if (j.contains("model")) {
    const Json& m = j.at("model");
    detail::reject_unknown(m, "model",
                           {"variant", "num_keys", "num_categories", "num_other_ids", "num_fields", "embedding_dim",
                            "other_dim", "attention_hidden", "factor_dim", "mlp_layers", "interaction", "use_time",
                            "use_count", "use_category", "time_factor_from_embedding", "count_multiplier",
                            "time_partition", "category_partition"});
    auto& mc = c.model;
    if (m.contains("variant")) mc.variant = parse_variant(m.at("variant").get<std::string>());
    detail::read_field(m, "num_keys", mc.num_keys, "model");
    detail::read_field(m, "num_categories", mc.num_categories, "model");
    detail::read_field(m, "num_other_ids", mc.num_other_ids, "model");
    detail::read_field(m, "num_fields", mc.num_fields, "model");
    detail::read_field(m, "embedding_dim", mc.embedding_dim, "model");
    detail::read_field(m, "other_dim", mc.other_dim, "model");
    detail::read_field(m, "attention_hidden", mc.attention_hidden, "model");
    detail::read_field(m, "factor_dim", mc.factor_dim, "model");
    detail::read_field(m, "mlp_layers", mc.mlp_layers, "model");
    if (m.contains("interaction")) mc.interaction = parse_interaction(m.at("interaction").get<std::string>());
    detail::read_field(m, "use_time", mc.use_time, "model");
    detail::read_field(m, "use_count", mc.use_count, "model");
    detail::read_field(m, "use_category", mc.use_category, "model");
    detail::read_field(m, "time_factor_from_embedding", mc.time_factor_from_embedding, "model");
    detail::read_optional_bool(m, "count_multiplier", mc.count_multiplier);
    detail::read_optional_bool(m, "time_partition", mc.time_partition);
    detail::read_optional_bool(m, "category_partition", mc.category_partition);
    if (mc.embedding_dim == 0 || mc.other_dim == 0) throw ConfigError("model embedding dims must be positive");
    if (mc.factor_dim == 0) throw ConfigError("model.factor_dim must be >= 1");
    if (mc.attention_hidden == 0) throw ConfigError("model.attention_hidden must be >= 1");
    for (auto w : mc.mlp_layers) {
      if (w == 0) throw ConfigError("model.mlp_layers entries must be positive");
    }
  }

  if (j.contains("train")) {
    const Json& t = j.at("train");
    detail::reject_unknown(t, "train", {"lr", "beta1", "beta2", "epsilon", "epochs", "batch_size"});
    detail::read_field(t, "lr", c.train.adam.lr, "train");
    detail::read_field(t, "beta1", c.train.adam.beta1, "train");
    detail::read_field(t, "beta2", c.train.adam.beta2, "train");
    detail::read_field(t, "epsilon", c.train.adam.epsilon, "train");
    detail::read_field(t, "epochs", c.train.epochs, "train");
    detail::read_field(t, "batch_size", c.train.batch_size, "train");
    if (c.train.batch_size == 0) throw ConfigError("train.batch_size must be positive");
    if (c.train.adam.lr < 0.0) throw ConfigError("train.lr must be >= 0");
  }

  if (j.contains("data")) {
    const Json& d = j.at("data");
    detail::reject_unknown(d, "data", {"time_boundaries_days", "count_boundaries", "event_types", "truncate_len",
                                       "key_thresholds", "behavior_thresholds"});
    detail::read_field(d, "time_boundaries_days", c.data.time_boundaries_days, "data");
    detail::read_field(d, "count_boundaries", c.data.count_boundaries, "data");
    detail::read_field(d, "event_types", c.data.event_types, "data");
    detail::read_field(d, "truncate_len", c.data.truncate_len, "data");
    detail::read_field(d, "key_thresholds", c.data.key_thresholds, "data");
    detail::read_field(d, "behavior_thresholds", c.data.behavior_thresholds, "data");
    try {
      (void)c.data.schemes();
      (void)c.data.type_filter();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("data: ") + e.what());
    }
  }

  if (j.contains("generator")) {
    const Json& g = j.at("generator");
    detail::reject_unknown(g, "generator",
                           {"num_users", "num_keys", "num_categories", "horizon_days", "sample_days", "activity_rate",
                            "duplication", "repeat_spread_days", "recency_half_life_days", "drift_rate",
                            "favorite_categories", "negatives_per_positive", "label_sharpness",
                            "target_from_preference", "samples_per_user", "num_profile_ids", "epoch"});
    auto& gc = c.generator;
    detail::read_field(g, "num_users", gc.num_users, "generator");
    detail::read_field(g, "num_keys", gc.num_keys, "generator");
    detail::read_field(g, "num_categories", gc.num_categories, "generator");
    detail::read_field(g, "horizon_days", gc.horizon_days, "generator");
    detail::read_field(g, "sample_days", gc.sample_days, "generator");
    detail::read_field(g, "activity_rate", gc.activity_rate, "generator");
    detail::read_field(g, "duplication", gc.duplication, "generator");
    detail::read_field(g, "repeat_spread_days", gc.repeat_spread_days, "generator");
    detail::read_field(g, "recency_half_life_days", gc.recency_half_life_days, "generator");
    detail::read_field(g, "drift_rate", gc.drift_rate, "generator");
    detail::read_field(g, "favorite_categories", gc.favorite_categories, "generator");
    detail::read_field(g, "negatives_per_positive", gc.negatives_per_positive, "generator");
    detail::read_field(g, "label_sharpness", gc.label_sharpness, "generator");
    detail::read_field(g, "target_from_preference", gc.target_from_preference, "generator");
    detail::read_field(g, "samples_per_user", gc.samples_per_user, "generator");
    detail::read_field(g, "num_profile_ids", gc.num_profile_ids, "generator");
    detail::read_field(g, "epoch", gc.epoch, "generator");
    try {
      gc.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  c.model.seed = c.seed;
  c.generator.seed = c.seed;
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config '" + path + "'");
  Json j;
  try {
    j = Json::parse(is);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  return run_config_from_json(j);
}

/// Fills vocabulary and bucket sizes the config left open from a batch.
inline ModelConfig resolve_model_config(const RunConfig& rc, const BatchFile& batch) {
  ModelConfig m = rc.model;
  m.seed = rc.seed;
  const SparseBatch& s = batch.sparse;
  auto max_id = [](const std::vector<std::int64_t>& v) {
    std::int64_t mx = -1;
    for (auto x : v) mx = std::max(mx, x);
    return static_cast<std::size_t>(mx + 1);
  };
  std::size_t keys = std::max(max_id(s.keys), max_id(s.target_key));
  if (batch.dense) keys = std::max(keys, max_id(batch.dense->keys));
  const std::size_t cats = std::max(max_id(s.category), max_id(s.target_category));
  const std::size_t others = max_id(s.other_features);
  if (m.num_keys == 0) m.num_keys = std::max<std::size_t>(keys, 1);
  if (m.num_categories == 0) m.num_categories = std::max<std::size_t>(cats, 1);
  if (m.num_other_ids == 0) m.num_other_ids = std::max<std::size_t>(others, 1);
  m.num_fields = s.num_fields;
  m.time_buckets = batch.schemes.time.bucket_count();
  m.count_buckets = batch.schemes.count.bucket_count();
  return m;
}

/// Like resolve_model_config, with vocabularies wide enough for `other` too.
inline ModelConfig resolve_model_config(const RunConfig& rc, const BatchFile& batch, const BatchFile& other) {
  ModelConfig m = resolve_model_config(rc, batch);
  const ModelConfig o = resolve_model_config(rc, other);
  m.num_keys = std::max(m.num_keys, o.num_keys);
  m.num_categories = std::max(m.num_categories, o.num_categories);
  m.num_other_ids = std::max(m.num_other_ids, o.num_other_ids);
  return m;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

constexpr const char* kCheckpointFormat = "dinmp-ckpt-v1";

struct Checkpoint {
  RunConfig config;  // model section fully resolved
  ParameterStore params;
};

inline Json checkpoint_to_json(const RunConfig& config, const ModelConfig& resolved, const ParameterStore& store) {
  RunConfig rc = config;
  rc.model = resolved;
  Json params = Json::object();
  for (const auto& [name, p] : store.entries()) {
    params[name] = {{"shape", p.value.shape()}, {"data", p.value.values()}};
  }
  Json model_extra = {{"time_buckets", resolved.time_buckets}, {"count_buckets", resolved.count_buckets}};
  return {{"format", kCheckpointFormat},
          {"config", to_json(rc)},
          {"buckets", model_extra},
          {"step", store.step()},
          {"params", params}};
}

inline void save_checkpoint(const std::string& path, const RunConfig& config, const ModelConfig& resolved,
                            const ParameterStore& store) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os << checkpoint_to_json(config, resolved, store).dump() << '\n';
  if (!os) throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

inline Checkpoint checkpoint_from_json(const Json& j) {
  if (!j.contains("format") || j.at("format") != kCheckpointFormat) {
    throw std::runtime_error(std::string("checkpoint: expected format '") + kCheckpointFormat + "'");
  }
  Checkpoint ck;
  ck.config = run_config_from_json(j.at("config"));
  ck.config.model.time_buckets = j.at("buckets").at("time_buckets").get<std::size_t>();
  ck.config.model.count_buckets = j.at("buckets").at("count_buckets").get<std::size_t>();
  const InterestModel model(ck.config.model);
  ck.params = model.init_params();
  const Json& params = j.at("params");
  for (auto& [name, p] : ck.params.entries()) {
    if (!params.contains(name)) throw std::runtime_error("checkpoint: missing parameter '" + name + "'");
    const Json& entry = params.at(name);
    if (entry.at("shape").get<std::vector<std::size_t>>() != p.value.shape()) {
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
    }
    p.value = Tensor(p.value.shape(), entry.at("data").get<std::vector<double>>());
  }
  for (const auto& [name, _] : params.items()) {
    if (!ck.params.contains(name)) throw std::runtime_error("checkpoint: unexpected parameter '" + name + "'");
  }
  ck.params.set_step(j.value("step", std::int64_t{0}));
  return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  return checkpoint_from_json(Json::parse(is));
}

}  // namespace dinmp
