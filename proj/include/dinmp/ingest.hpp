// Copyright (C) 2026 The DINMP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dinmp/batch.hpp"
#include "dinmp/events.hpp"
#include "dinmp/stats.hpp"

namespace dinmp {

/// One row of the samples file: a scoring request for `user_id` at
/// `reference_time`.
struct SampleRecord {
  std::int64_t user_id = 0;
  std::int64_t target_key = 0;
  std::int64_t target_category = 0;
  std::uint8_t label = 0;
  std::int64_t reference_time = 0;
  std::vector<std::int64_t> other_features;

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

class CsvError : public std::runtime_error {
 public:
  CsvError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

constexpr std::string_view kEventsHeader = "user_id,key_id,category_id,timestamp,event_type";
constexpr std::string_view kSamplesHeader = "user_id,target_key,target_category,label,reference_time,other_features";

namespace detail {

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

inline std::int64_t parse_int(std::string_view s, const std::string& source, std::size_t line, const char* field) {
  s = trim(s);
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw CsvError(source, line, std::string("field '") + field + "': not an integer: '" + std::string(s) + "'");
  }
  if (v < 0) throw CsvError(source, line, std::string("field '") + field + "': negative value");
  return v;
}

}  // namespace detail

inline std::vector<BehaviorEvent> read_events_csv(std::istream& is, const std::string& source = "events") {
  std::vector<BehaviorEvent> events;
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(is, line)) throw CsvError(source, 1, "empty file");
  ++lineno;
  if (detail::trim(line) != kEventsHeader) throw CsvError(source, lineno, "expected header '" + std::string(kEventsHeader) + "'");
  while (std::getline(is, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(detail::trim(line), ',');
    if (f.size() != 5) throw CsvError(source, lineno, "expected 5 fields, got " + std::to_string(f.size()));
    BehaviorEvent e;
    e.user_id = detail::parse_int(f[0], source, lineno, "user_id");
    e.key_id = detail::parse_int(f[1], source, lineno, "key_id");
    e.category_id = detail::parse_int(f[2], source, lineno, "category_id");
    e.timestamp = detail::parse_int(f[3], source, lineno, "timestamp");
    try {
      e.type = parse_event_type(detail::trim(f[4]));
    } catch (const std::invalid_argument& ex) {
      throw CsvError(source, lineno, ex.what());
    }
    events.push_back(e);
  }
  return events;
}

inline std::vector<SampleRecord> read_samples_csv(std::istream& is, const std::string& source = "samples") {
  std::vector<SampleRecord> samples;
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(is, line)) throw CsvError(source, 1, "empty file");
  ++lineno;
  if (detail::trim(line) != kSamplesHeader) throw CsvError(source, lineno, "expected header '" + std::string(kSamplesHeader) + "'");
  while (std::getline(is, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(detail::trim(line), ',');
    if (f.size() != 6) throw CsvError(source, lineno, "expected 6 fields, got " + std::to_string(f.size()));
    SampleRecord s;
    s.user_id = detail::parse_int(f[0], source, lineno, "user_id");
    s.target_key = detail::parse_int(f[1], source, lineno, "target_key");
    s.target_category = detail::parse_int(f[2], source, lineno, "target_category");
    const auto label = detail::parse_int(f[3], source, lineno, "label");
    if (label > 1) throw CsvError(source, lineno, "label must be 0 or 1");
    s.label = static_cast<std::uint8_t>(label);
    s.reference_time = detail::parse_int(f[4], source, lineno, "reference_time");
    const auto other = detail::trim(f[5]);
    if (!other.empty()) {
      for (auto part : detail::split(other, ';')) s.other_features.push_back(detail::parse_int(part, source, lineno, "other_features"));
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

inline void write_events_csv(std::ostream& os, std::span<const BehaviorEvent> events) {
  os << kEventsHeader << '\n';
  for (const auto& e : events) {
    os << e.user_id << ',' << e.key_id << ',' << e.category_id << ',' << e.timestamp << ',' << to_string(e.type) << '\n';
  }
}

inline void write_samples_csv(std::ostream& os, std::span<const SampleRecord> samples) {
  os << kSamplesHeader << '\n';
  for (const auto& s : samples) {
    os << s.user_id << ',' << s.target_key << ',' << s.target_category << ',' << int(s.label) << ',' << s.reference_time
       << ',';
    for (std::size_t i = 0; i < s.other_features.size(); ++i) os << (i ? ";" : "") << s.other_features[i];
    os << '\n';
  }
}

inline std::vector<BehaviorEvent> read_events_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  return read_events_csv(is, path);
}

inline std::vector<SampleRecord> read_samples_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  return read_samples_csv(is, path);
}

struct IngestOptions {
  BucketSchemes schemes;
  EventTypeFilter type_filter = default_type_filter();
  bool build_dense = true;
  std::size_t truncate_len = 20;  // dense rows keep the most recent events; 0 = no truncation
};

struct IngestResult {
  BatchFile batch;
  std::vector<std::vector<KeyVectorEntry>> entries;  // per sample, for statistics
  DatasetStats stats;
};

/// Joins samples with each user's behavior history strictly before the
/// sample's reference time and compacts it into key-vector form.
inline IngestResult ingest(std::span<const BehaviorEvent> events, std::span<const SampleRecord> samples,
                           const IngestOptions& opt, std::span<const std::int64_t> key_thresholds = {},
                           std::span<const std::int64_t> behavior_thresholds = {}) {
  if (samples.empty()) throw std::invalid_argument("ingest: no samples");
  std::map<std::int64_t, std::vector<BehaviorEvent>> by_user;
  for (const auto& e : events) {
    if (opt.type_filter.count(e.type)) by_user[e.user_id].push_back(e);
  }
  for (auto& [_, evs] : by_user) {
    std::stable_sort(evs.begin(), evs.end(), [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
  }

  IngestResult out;
  std::vector<SampleInput> inputs;
  std::vector<std::int64_t> reference_times;
  std::vector<std::vector<BehaviorEvent>> histories;
  inputs.reserve(samples.size());
  static const std::vector<BehaviorEvent> kNone;
  for (const auto& s : samples) {
    auto it = by_user.find(s.user_id);
    const auto& evs = it == by_user.end() ? kNone : it->second;
    const auto end = std::lower_bound(evs.begin(), evs.end(), s.reference_time,
                                      [](const BehaviorEvent& e, std::int64_t t) { return e.timestamp < t; });
    std::span<const BehaviorEvent> history(evs.data(), static_cast<std::size_t>(end - evs.begin()));
    SampleInput in;
    in.entries = aggregate_events(history, s.reference_time, opt.type_filter);
    in.target_key = s.target_key;
    in.target_category = s.target_category;
    in.other_features = s.other_features;
    in.label = s.label;
    out.entries.push_back(in.entries);
    inputs.push_back(std::move(in));
    reference_times.push_back(s.reference_time);
    if (opt.build_dense) histories.emplace_back(history.begin(), history.end());
  }
  out.batch.schemes = opt.schemes;
  out.batch.sparse = build_sparse_batch(inputs, reference_times, opt.schemes);
  if (opt.build_dense) out.batch.dense = build_dense_batch(histories, inputs, opt.truncate_len);
  out.stats = dataset_stats(out.entries, key_thresholds, behavior_thresholds);
  return out;
}

}  // namespace dinmp
