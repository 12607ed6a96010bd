// Copyright (C) 2026 The DINMP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "dinmp/events.hpp"
#include "dinmp/ingest.hpp"
#include "dinmp/ops.hpp"

namespace dinmp {

/// Parameters of the synthetic click log. Every user gets an old and a new
/// category-preference profile and drifts from one to the other over the
/// horizon; clicks on a key repeat a geometric number of times.
struct GeneratorConfig {
  std::uint64_t seed = 1;
  std::size_t num_users = 2500;
  std::size_t num_keys = 2000;
  std::size_t num_categories = 20;
  double horizon_days = 200.0;         // total log span; samples fall in its last `sample_days`
  double sample_days = 8.0;            // the last of these days is the test day
  double activity_rate = 0.1;          // distinct-key visits per user per day
  double duplication = 4.0;            // mean clicks per visit (geometric)
  double repeat_spread_days = 2.0;     // repeats of a visit fall within this window
  double recency_half_life_days = 60.0;
  double drift_rate = 0.75;            // fraction of the old→new profile shift over the horizon
  std::size_t favorite_categories = 3; // categories per preference profile
  double negatives_per_positive = 3.0; // sets the target positive rate 1/(1+r)
  double label_sharpness = 4.0;        // slope of the logistic label model
  double target_from_preference = 0.5; // share of targets drawn from the current preference
  std::size_t samples_per_user = 20;
  std::size_t num_profile_ids = 8;     // vocabulary of the single "other" feature
  std::int64_t epoch = 1'500'000'000;  // timestamp of day 0

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0)) throw std::invalid_argument(std::string("GeneratorConfig: ") + name + " must be positive");
    };
    positive(static_cast<double>(num_users), "num_users");
    positive(static_cast<double>(num_keys), "num_keys");
    positive(static_cast<double>(num_categories), "num_categories");
    positive(horizon_days, "horizon_days");
    positive(sample_days, "sample_days");
    positive(activity_rate, "activity_rate");
    positive(recency_half_life_days, "recency_half_life_days");
    positive(negatives_per_positive, "negatives_per_positive");
    positive(label_sharpness, "label_sharpness");
    positive(static_cast<double>(samples_per_user), "samples_per_user");
    positive(static_cast<double>(favorite_categories), "favorite_categories");
    positive(static_cast<double>(num_profile_ids), "num_profile_ids");
    if (duplication < 1.0) throw std::invalid_argument("GeneratorConfig: duplication must be >= 1");
    if (num_keys < num_categories) throw std::invalid_argument("GeneratorConfig: need at least one key per category");
    if (sample_days >= horizon_days) throw std::invalid_argument("GeneratorConfig: sample_days must be < horizon_days");
    if (drift_rate < 0.0) throw std::invalid_argument("GeneratorConfig: drift_rate must be >= 0");
    if (target_from_preference < 0.0 || target_from_preference > 1.0) {
      throw std::invalid_argument("GeneratorConfig: target_from_preference must be in [0, 1]");
    }
  }

  double target_positive_rate() const { return 1.0 / (1.0 + negatives_per_positive); }
  std::int64_t test_start() const {
    return epoch + static_cast<std::int64_t>((horizon_days - 1.0) * kSecondsPerDay);
  }
};

struct GeneratedData {
  std::vector<BehaviorEvent> events;
  std::vector<SampleRecord> samples;
  std::vector<double> true_logits;  // generative label logit per sample
  double intercept = 0.0;
  double positive_rate = 0.0;
  double mean_history_events = 0.0;  // raw events before each sample's reference time
  double mean_history_keys = 0.0;    // distinct keys among them
  std::int64_t test_start = 0;       // samples at or after this time form the test split
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Distributions are drawn with explicit formulas over raw 64-bit output so
/// the generated bytes do not depend on the standard library's distribution
/// implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n; }
  double exponential(double mean) { return -mean * std::log1p(-uniform()); }
  /// Geometric on {1, 2, ...} with the given mean.
  std::int64_t geometric(double mean) {
    if (mean <= 1.0) return 1;
    const double p = 1.0 / mean;
    return 1 + static_cast<std::int64_t>(std::floor(std::log1p(-uniform()) / std::log1p(-p)));
  }
  std::size_t poisson(double mean) {
    // Knuth for small means, normal approximation above.
    if (mean < 30.0) {
      const double limit = std::exp(-mean);
      double prod = uniform();
      std::size_t k = 0;
      while (prod > limit) {
        prod *= uniform();
        ++k;
      }
      return k;
    }
    const double u1 = std::max(uniform(), 1e-300), u2 = uniform();
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    return static_cast<std::size_t>(std::max(0.0, std::round(mean + std::sqrt(mean) * z)));
  }
  std::size_t categorical(const std::vector<double>& weights) {
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    double r = uniform() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      r -= weights[i];
      if (r < 0.0) return i;
    }
    return weights.size() - 1;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace detail

/// Category of a key in the synthetic catalogue.
inline std::int64_t synthetic_category(std::int64_t key, std::size_t num_categories) {
  return key % static_cast<std::int64_t>(num_categories);
}

/// Recency-weighted, count-weighted affinity of a history to a category: the
/// quantity the label model is built on.
inline double true_affinity(std::span<const KeyVectorEntry> entries, std::int64_t target_category,
                            std::int64_t reference_time, double half_life_days) {
  double a = 0.0;
  const double half_life = half_life_days * kSecondsPerDay;
  for (const auto& e : entries) {
    if (e.category_id != target_category) continue;
    a += static_cast<double>(e.count) * std::exp2(-static_cast<double>(reference_time - e.last_time) / half_life);
  }
  return a;
}

inline GeneratedData generate(const GeneratorConfig& cfg) {
  cfg.validate();
  GeneratedData out;
  out.test_start = cfg.test_start();
  const std::int64_t window_start =
      cfg.epoch + static_cast<std::int64_t>((cfg.horizon_days - cfg.sample_days) * kSecondsPerDay);
  const std::size_t keys_per_category = cfg.num_keys / cfg.num_categories;

  auto key_in_category = [&](detail::Rng& rng, std::size_t category) {
    return static_cast<std::int64_t>(category + cfg.num_categories * rng.below(keys_per_category));
  };
  auto profile = [&](detail::Rng& rng) {
    std::vector<double> w(cfg.num_categories, 0.0);
    for (std::size_t k = 0; k < cfg.favorite_categories; ++k) w[rng.below(cfg.num_categories)] += rng.exponential(1.0);
    return w;
  };

  std::vector<double> scores;
  double history_total = 0.0, keys_total = 0.0;
  for (std::size_t u = 0; u < cfg.num_users; ++u) {
    detail::Rng rng(detail::splitmix64(cfg.seed * 0x100000001B3ull + u));
    const auto user = static_cast<std::int64_t>(u);
    const std::vector<double> old_pref = profile(rng), new_pref = profile(rng);
    auto preference_at = [&](double day) {
      const double s = std::clamp(cfg.drift_rate * day / cfg.horizon_days, 0.0, 1.0);
      std::vector<double> p(cfg.num_categories);
      const double old_total = std::accumulate(old_pref.begin(), old_pref.end(), 0.0);
      const double new_total = std::accumulate(new_pref.begin(), new_pref.end(), 0.0);
      for (std::size_t c = 0; c < p.size(); ++c) p[c] = (1.0 - s) * old_pref[c] / old_total + s * new_pref[c] / new_total;
      return p;
    };

    std::vector<BehaviorEvent> user_events;
    std::vector<char> visited(cfg.num_keys, 0);
    const std::size_t visits = rng.poisson(cfg.activity_rate * cfg.horizon_days);
    for (std::size_t v = 0; v < visits; ++v) {
      const double day = rng.uniform() * cfg.horizon_days;
      const auto category = rng.categorical(preference_at(day));
      std::int64_t key = key_in_category(rng, category);
      // Each visit opens a fresh key so repeats of one visit are the only
      // source of duplicates.
      for (int tries = 0; visited[static_cast<std::size_t>(key)] && tries < 32; ++tries) key = key_in_category(rng, category);
      if (visited[static_cast<std::size_t>(key)]) continue;
      visited[static_cast<std::size_t>(key)] = 1;
      const std::int64_t start = cfg.epoch + static_cast<std::int64_t>(day * kSecondsPerDay);
      const std::int64_t repeats = rng.geometric(cfg.duplication);
      for (std::int64_t r = 0; r < repeats; ++r) {
        const std::int64_t offset = r == 0 ? 0 : static_cast<std::int64_t>(rng.uniform() * cfg.repeat_spread_days * kSecondsPerDay);
        user_events.push_back({user, key, static_cast<std::int64_t>(category), start + offset, EventType::click});
      }
    }
    std::stable_sort(user_events.begin(), user_events.end(),
                     [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });

    for (std::size_t s = 0; s < cfg.samples_per_user; ++s) {
      const std::int64_t ref =
          window_start + static_cast<std::int64_t>(rng.uniform() * cfg.sample_days * kSecondsPerDay);
      const double ref_day = static_cast<double>(ref - cfg.epoch) / kSecondsPerDay;
      const std::size_t category = rng.uniform() < cfg.target_from_preference
                                       ? rng.categorical(preference_at(ref_day))
                                       : rng.below(cfg.num_categories);
      SampleRecord rec;
      rec.user_id = user;
      rec.target_category = static_cast<std::int64_t>(category);
      rec.target_key = key_in_category(rng, category);
      rec.reference_time = ref;
      rec.other_features = {static_cast<std::int64_t>(rng.below(cfg.num_profile_ids))};
      const auto end = std::lower_bound(user_events.begin(), user_events.end(), ref,
                                        [](const BehaviorEvent& e, std::int64_t t) { return e.timestamp < t; });
      const std::span<const BehaviorEvent> history(user_events.data(), static_cast<std::size_t>(end - user_events.begin()));
      history_total += static_cast<double>(history.size());
      const auto entries = aggregate_events(history, ref);
      keys_total += static_cast<double>(entries.size());
      scores.push_back(std::log1p(true_affinity(entries, rec.target_category, ref, cfg.recency_half_life_days)));
      out.samples.push_back(std::move(rec));
    }
    out.events.insert(out.events.end(), user_events.begin(), user_events.end());
  }

  // Intercept by bisection so the expected positive rate hits the target.
  const double target = cfg.target_positive_rate();
  auto expected_rate = [&](double b) {
    double s = 0.0;
    for (double x : scores) s += sigmoid(cfg.label_sharpness * x + b);
    return s / static_cast<double>(scores.size());
  };
  double lo = -50.0, hi = 50.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (expected_rate(mid) < target ? lo : hi) = mid;
  }
  out.intercept = 0.5 * (lo + hi);

  detail::Rng label_rng(detail::splitmix64(cfg.seed ^ 0x5DEECE66Dull));
  std::size_t positives = 0;
  out.true_logits.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double logit = cfg.label_sharpness * scores[i] + out.intercept;
    out.true_logits.push_back(logit);
    out.samples[i].label = label_rng.uniform() < sigmoid(logit) ? 1 : 0;
    positives += out.samples[i].label;
  }
  out.positive_rate = static_cast<double>(positives) / static_cast<double>(out.samples.size());
  out.mean_history_events = history_total / static_cast<double>(out.samples.size());
  out.mean_history_keys = keys_total / static_cast<double>(out.samples.size());
  return out;
}

}  // namespace dinmp
