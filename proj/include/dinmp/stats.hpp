// Copyright (C) 2026 The DINMP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "dinmp/events.hpp"

namespace dinmp {

struct ThresholdFraction {
  std::int64_t threshold = 0;
  double fraction = 0.0;  // share of samples strictly below threshold
};

struct DatasetStats {
  std::size_t num_samples = 0;
  std::int64_t max_behaviors = 0;
  double avg_behaviors = 0.0;
  std::int64_t max_keys = 0;
  double avg_keys = 0.0;
  std::vector<ThresholdFraction> key_fractions;
  std::vector<ThresholdFraction> behavior_fractions;

  /// avg #behavior / avg #key; how much aggregation compressed the raw logs.
  double compression_ratio() const { return avg_keys > 0.0 ? avg_behaviors / avg_keys : 0.0; }
};

/// Per-sample #behavior (sum of counts) and #key (entries) statistics.
inline DatasetStats dataset_stats(std::span<const std::vector<KeyVectorEntry>> samples,
                                  std::span<const std::int64_t> key_thresholds = {},
                                  std::span<const std::int64_t> behavior_thresholds = {}) {
  if (samples.empty()) throw std::invalid_argument("dataset_stats: no samples");
  DatasetStats s;
  s.num_samples = samples.size();
  std::vector<std::int64_t> keys, behaviors;
  keys.reserve(samples.size());
  behaviors.reserve(samples.size());
  for (const auto& entries : samples) {
    std::int64_t b = 0;
    for (const auto& e : entries) b += e.count;
    keys.push_back(static_cast<std::int64_t>(entries.size()));
    behaviors.push_back(b);
  }
  double key_total = 0.0, behavior_total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    key_total += static_cast<double>(keys[i]);
    behavior_total += static_cast<double>(behaviors[i]);
    s.max_keys = std::max(s.max_keys, keys[i]);
    s.max_behaviors = std::max(s.max_behaviors, behaviors[i]);
  }
  const auto n = static_cast<double>(samples.size());
  s.avg_keys = key_total / n;
  s.avg_behaviors = behavior_total / n;
  auto fraction_below = [&](const std::vector<std::int64_t>& xs, std::int64_t t) {
    return static_cast<double>(std::count_if(xs.begin(), xs.end(), [t](auto x) { return x < t; })) / n;
  };
  for (auto t : key_thresholds) s.key_fractions.push_back({t, fraction_below(keys, t)});
  for (auto t : behavior_thresholds) s.behavior_fractions.push_back({t, fraction_below(behaviors, t)});
  return s;
}

}  // namespace dinmp
