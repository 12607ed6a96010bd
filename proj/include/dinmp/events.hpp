// Copyright (C) 2026 The DINMP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dinmp {

enum class EventType { click, buy, cart, fav };

inline std::string_view to_string(EventType t) {
  switch (t) {
    case EventType::click: return "click";
    case EventType::buy: return "buy";
    case EventType::cart: return "cart";
    case EventType::fav: return "fav";
  }
  return "click";
}

inline EventType parse_event_type(std::string_view s) {
  if (s == "click" || s == "ipv" || s == "pv") return EventType::click;
  if (s == "buy") return EventType::buy;
  if (s == "cart") return EventType::cart;
  if (s == "fav") return EventType::fav;
  throw std::invalid_argument("unknown event type '" + std::string(s) + "'");
}

struct BehaviorEvent {
  std::int64_t user_id = 0;
  std::int64_t key_id = 0;
  std::int64_t category_id = 0;
  std::int64_t timestamp = 0;  // seconds since epoch
  EventType type = EventType::click;

  friend bool operator==(const BehaviorEvent&, const BehaviorEvent&) = default;
};

/// One aggregated behavior: the key plus its summary vector (last time, count,
/// category).
struct KeyVectorEntry {
  std::int64_t key_id = 0;
  std::int64_t last_time = 0;
  std::int64_t count = 1;
  std::int64_t category_id = 0;

  friend bool operator==(const KeyVectorEntry&, const KeyVectorEntry&) = default;
};

using EventTypeFilter = std::set<EventType>;

inline EventTypeFilter default_type_filter() { return {EventType::click}; }

/// Collapses one user's raw events into key-vector entries sorted by key id.
///
/// Events at or after `reference_time` are dropped, as are events whose type
/// is not in `type_filter`. A key whose category changes across events keeps
/// the category of its most recent occurrence (input order breaks timestamp
/// ties).
inline std::vector<KeyVectorEntry> aggregate_events(std::span<const BehaviorEvent> events,
                                                    std::int64_t reference_time,
                                                    const EventTypeFilter& type_filter = default_type_filter()) {
  if (!events.empty()) {
    const auto user = events.front().user_id;
    for (const auto& e : events) {
      if (e.user_id != user) throw std::invalid_argument("aggregate_events: events from more than one user");
      if (e.timestamp < 0 || e.key_id < 0 || e.category_id < 0) {
        throw std::invalid_argument("aggregate_events: negative id or timestamp");
      }
    }
  }
  std::map<std::int64_t, KeyVectorEntry> by_key;
  for (const auto& e : events) {
    if (e.timestamp >= reference_time || !type_filter.count(e.type)) continue;
    auto [it, inserted] = by_key.try_emplace(e.key_id, KeyVectorEntry{e.key_id, e.timestamp, 0, e.category_id});
    KeyVectorEntry& entry = it->second;
    ++entry.count;
    if (e.timestamp >= entry.last_time) {
      entry.last_time = e.timestamp;
      entry.category_id = e.category_id;
    }
  }
  std::vector<KeyVectorEntry> out;
  out.reserve(by_key.size());
  for (auto& [_, entry] : by_key) out.push_back(entry);
  return out;
}

constexpr std::int64_t kSecondsPerDay = 86400;

/// Boundaries are durations before the reference time; bucket k collects
/// deltas with exactly k boundaries strictly below them.
class TimeBucketScheme {
 public:
  TimeBucketScheme() : TimeBucketScheme(default_boundaries()) {}

  explicit TimeBucketScheme(std::vector<std::int64_t> boundaries) : boundaries_(std::move(boundaries)) {
    if (boundaries_.empty()) throw std::invalid_argument("TimeBucketScheme: boundaries must be nonempty");
    if (boundaries_.front() <= 0) throw std::invalid_argument("TimeBucketScheme: boundaries must be positive");
    for (std::size_t i = 1; i < boundaries_.size(); ++i) {
      if (boundaries_[i] <= boundaries_[i - 1]) {
        throw std::invalid_argument("TimeBucketScheme: boundaries must be strictly increasing");
      }
    }
  }

  static TimeBucketScheme from_days(std::span<const double> days) {
    std::vector<std::int64_t> b;
    for (double d : days) b.push_back(static_cast<std::int64_t>(d * kSecondsPerDay));
    return TimeBucketScheme(std::move(b));
  }

  /// 1d, 2d, 4d, 1w, 2w, 1m, 2m, 3m, 6m.
  static std::vector<std::int64_t> default_boundaries() {
    std::vector<std::int64_t> b;
    for (std::int64_t d : {1, 2, 4, 7, 14, 30, 60, 90, 180}) b.push_back(d * kSecondsPerDay);
    return b;
  }

  const std::vector<std::int64_t>& boundaries() const { return boundaries_; }
  std::size_t bucket_count() const { return boundaries_.size() + 1; }

  friend bool operator==(const TimeBucketScheme&, const TimeBucketScheme&) = default;

 private:
  std::vector<std::int64_t> boundaries_;
};

/// Count boundaries; bucket index is the number of boundaries <= count.
class CountBucketScheme {
 public:
  CountBucketScheme() : CountBucketScheme(std::vector<std::int64_t>{2, 4, 8, 16, 32}) {}

  explicit CountBucketScheme(std::vector<std::int64_t> boundaries) : boundaries_(std::move(boundaries)) {
    if (boundaries_.empty()) throw std::invalid_argument("CountBucketScheme: boundaries must be nonempty");
    if (boundaries_.front() < 2) throw std::invalid_argument("CountBucketScheme: first boundary must be >= 2");
    for (std::size_t i = 1; i < boundaries_.size(); ++i) {
      if (boundaries_[i] <= boundaries_[i - 1]) {
        throw std::invalid_argument("CountBucketScheme: boundaries must be strictly increasing");
      }
    }
  }

  const std::vector<std::int64_t>& boundaries() const { return boundaries_; }
  std::size_t bucket_count() const { return boundaries_.size() + 1; }

  friend bool operator==(const CountBucketScheme&, const CountBucketScheme&) = default;

 private:
  std::vector<std::int64_t> boundaries_;
};

inline std::size_t assign_time_bucket(std::int64_t last_time, std::int64_t reference_time,
                                      const TimeBucketScheme& scheme) {
  if (last_time >= reference_time) {
    throw std::invalid_argument("assign_time_bucket: behavior at " + std::to_string(last_time) +
                                " is not before reference time " + std::to_string(reference_time));
  }
  const std::int64_t delta = reference_time - last_time;
  const auto& b = scheme.boundaries();
  return static_cast<std::size_t>(std::lower_bound(b.begin(), b.end(), delta) - b.begin());
}

inline std::size_t assign_count_bucket(std::int64_t count, const CountBucketScheme& scheme) {
  if (count < 1) throw std::invalid_argument("assign_count_bucket: count must be >= 1");
  const auto& b = scheme.boundaries();
  return static_cast<std::size_t>(std::upper_bound(b.begin(), b.end(), count) - b.begin());
}

}  // namespace dinmp
