// Copyright (C) 2026 The DINMP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dinmp/events.hpp"

namespace dinmp {

/// Triplet (I, J, V) batch: sample i owns entries [row_offsets[i],
/// row_offsets[i+1]); keys holds J; the per-entry bucket columns hold V.
struct SparseBatch {
  std::vector<std::size_t> row_offsets{0};
  std::vector<std::int64_t> keys;
  std::vector<std::int64_t> time_bucket;
  std::vector<std::int64_t> count_bucket;
  std::vector<std::int64_t> category;
  std::vector<std::int64_t> counts;  // raw occurrence counts, used as the DINSKV multiplier
  std::vector<std::uint8_t> labels;
  std::vector<std::int64_t> target_key;
  std::vector<std::int64_t> target_category;
  std::size_t num_fields = 0;               // F
  std::vector<std::int64_t> other_features;  // B×F row-major

  std::size_t batch_size() const { return row_offsets.size() - 1; }
  std::size_t num_entries() const { return keys.size(); }
  std::size_t row_length(std::size_t i) const { return row_offsets[i + 1] - row_offsets[i]; }

  /// Throws if any structural invariant is broken.
  void validate() const {
    if (row_offsets.empty() || row_offsets.front() != 0) throw std::invalid_argument("SparseBatch: row_offsets[0] != 0");
    for (std::size_t i = 1; i < row_offsets.size(); ++i) {
      if (row_offsets[i] < row_offsets[i - 1]) throw std::invalid_argument("SparseBatch: row_offsets decrease");
    }
    const std::size_t n = keys.size(), b = batch_size();
    if (row_offsets.back() != n) throw std::invalid_argument("SparseBatch: row_offsets[B] != N");
    if (time_bucket.size() != n || count_bucket.size() != n || category.size() != n || counts.size() != n) {
      throw std::invalid_argument("SparseBatch: per-entry column lengths differ");
    }
    if (labels.size() != b || target_key.size() != b || target_category.size() != b ||
        other_features.size() != b * num_fields) {
      throw std::invalid_argument("SparseBatch: per-sample column lengths differ");
    }
  }

  friend bool operator==(const SparseBatch&, const SparseBatch&) = default;
};

/// Fixed-length padded behavior sequences for the dense DIN path. Row i holds
/// lengths[i] valid keys in chronological order followed by padding.
struct DenseBatch {
  std::size_t max_len = 0;
  std::vector<std::size_t> lengths;
  std::vector<std::int64_t> keys;  // B×max_len, padding = 0
  std::vector<std::uint8_t> labels;
  std::vector<std::int64_t> target_key;
  std::vector<std::int64_t> target_category;
  std::size_t num_fields = 0;
  std::vector<std::int64_t> other_features;

  std::size_t batch_size() const { return lengths.size(); }

  friend bool operator==(const DenseBatch&, const DenseBatch&) = default;
};

struct BucketSchemes {
  TimeBucketScheme time;
  CountBucketScheme count;

  friend bool operator==(const BucketSchemes&, const BucketSchemes&) = default;
};

struct SampleInput {
  std::vector<KeyVectorEntry> entries;
  std::int64_t target_key = 0;
  std::int64_t target_category = 0;
  std::vector<std::int64_t> other_features;
  std::uint8_t label = 0;
};

/// Concatenates per-sample entries in sample order, assigning time and count
/// buckets against each sample's own reference time.
inline SparseBatch build_sparse_batch(std::span<const SampleInput> samples,
                                      std::span<const std::int64_t> reference_times, const BucketSchemes& schemes) {
  if (samples.empty()) throw std::invalid_argument("build_sparse_batch: no samples");
  if (reference_times.size() != samples.size()) {
    throw std::invalid_argument("build_sparse_batch: " + std::to_string(samples.size()) + " samples but " +
                                std::to_string(reference_times.size()) + " reference times");
  }
  SparseBatch batch;
  batch.num_fields = samples.front().other_features.size();
  std::size_t total = 0;
  for (const auto& s : samples) total += s.entries.size();
  batch.keys.reserve(total);
  batch.time_bucket.reserve(total);
  batch.count_bucket.reserve(total);
  batch.category.reserve(total);
  batch.counts.reserve(total);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.other_features.size() != batch.num_fields) {
      throw std::invalid_argument("build_sparse_batch: sample " + std::to_string(i) + " has " +
                                  std::to_string(s.other_features.size()) + " other features, expected " +
                                  std::to_string(batch.num_fields));
    }
    if (s.label > 1) throw std::invalid_argument("build_sparse_batch: label must be 0 or 1");
    for (const auto& e : s.entries) {
      batch.keys.push_back(e.key_id);
      batch.time_bucket.push_back(static_cast<std::int64_t>(assign_time_bucket(e.last_time, reference_times[i], schemes.time)));
      batch.count_bucket.push_back(static_cast<std::int64_t>(assign_count_bucket(e.count, schemes.count)));
      batch.category.push_back(e.category_id);
      batch.counts.push_back(e.count);
    }
    batch.row_offsets.push_back(batch.keys.size());
    batch.labels.push_back(s.label);
    batch.target_key.push_back(s.target_key);
    batch.target_category.push_back(s.target_category);
    batch.other_features.insert(batch.other_features.end(), s.other_features.begin(), s.other_features.end());
  }
  return batch;
}

/// Builds padded sequences from raw (already filtered) per-sample histories,
/// keeping the `truncate_len` most recent events; 0 keeps everything.
inline DenseBatch build_dense_batch(std::span<const std::vector<BehaviorEvent>> histories,
                                    std::span<const SampleInput> samples, std::size_t truncate_len) {
  if (histories.size() != samples.size()) throw std::invalid_argument("build_dense_batch: length mismatch");
  DenseBatch batch;
  std::size_t longest = 0;
  for (const auto& h : histories) longest = std::max(longest, h.size());
  batch.max_len = truncate_len == 0 ? longest : std::min(truncate_len, longest);
  batch.num_fields = samples.empty() ? 0 : samples.front().other_features.size();
  batch.keys.assign(histories.size() * batch.max_len, 0);
  for (std::size_t i = 0; i < histories.size(); ++i) {
    std::vector<BehaviorEvent> h = histories[i];
    std::stable_sort(h.begin(), h.end(), [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
    const std::size_t keep = std::min(batch.max_len, h.size());
    for (std::size_t l = 0; l < keep; ++l) batch.keys[i * batch.max_len + l] = h[h.size() - keep + l].key_id;
    batch.lengths.push_back(keep);
    const auto& s = samples[i];
    if (s.other_features.size() != batch.num_fields) throw std::invalid_argument("build_dense_batch: ragged features");
    batch.labels.push_back(s.label);
    batch.target_key.push_back(s.target_key);
    batch.target_category.push_back(s.target_category);
    batch.other_features.insert(batch.other_features.end(), s.other_features.begin(), s.other_features.end());
  }
  return batch;
}

/// Gathers the given sample rows into a new batch; used for mini-batching.
inline SparseBatch slice(const SparseBatch& b, std::span<const std::size_t> rows) {
  SparseBatch out;
  out.num_fields = b.num_fields;
  for (const std::size_t i : rows) {
    for (std::size_t n = b.row_offsets[i]; n < b.row_offsets[i + 1]; ++n) {
      out.keys.push_back(b.keys[n]);
      out.time_bucket.push_back(b.time_bucket[n]);
      out.count_bucket.push_back(b.count_bucket[n]);
      out.category.push_back(b.category[n]);
      out.counts.push_back(b.counts[n]);
    }
    out.row_offsets.push_back(out.keys.size());
    out.labels.push_back(b.labels[i]);
    out.target_key.push_back(b.target_key[i]);
    out.target_category.push_back(b.target_category[i]);
    for (std::size_t f = 0; f < b.num_fields; ++f) out.other_features.push_back(b.other_features[i * b.num_fields + f]);
  }
  return out;
}

inline DenseBatch slice(const DenseBatch& b, std::span<const std::size_t> rows) {
  DenseBatch out;
  out.max_len = b.max_len;
  out.num_fields = b.num_fields;
  for (const std::size_t i : rows) {
    out.lengths.push_back(b.lengths[i]);
    out.keys.insert(out.keys.end(), b.keys.begin() + static_cast<std::ptrdiff_t>(i * b.max_len),
                    b.keys.begin() + static_cast<std::ptrdiff_t>((i + 1) * b.max_len));
    out.labels.push_back(b.labels[i]);
    out.target_key.push_back(b.target_key[i]);
    out.target_category.push_back(b.target_category[i]);
    for (std::size_t f = 0; f < b.num_fields; ++f) out.other_features.push_back(b.other_features[i * b.num_fields + f]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// KVB1 compacted batch file. Layout (little-endian):
//
//   char[4]  magic "KVB1"
//   u32      format version (1)
//   u64      T0 = #time boundaries,  i64[T0] time boundaries (seconds)
//   u64      C0 = #count boundaries, i64[C0] count boundaries
//   u64      B, N, F
//   u64[B+1] row_offsets
//   i64[N]   keys
//   i64[N]   time_bucket
//   i64[N]   count_bucket
//   i64[N]   category
//   i64[N]   counts
//   u8[B]    labels
//   i64[B]   target_key
//   i64[B]   target_category
//   i64[B*F] other_features
//   u8       has_dense (0/1)
//   if has_dense:
//     u64      L (max_len)
//     u64[B]   lengths
//     i64[B*L] keys
//
// Dense rows reuse the sample columns of the sparse section.
// ---------------------------------------------------------------------------

struct BatchFile {
  BucketSchemes schemes;
  SparseBatch sparse;
  std::optional<DenseBatch> dense;

  friend bool operator==(const BatchFile&, const BatchFile&) = default;
};

namespace detail {

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& os) : os_(os) {}
  template <class T>
  void put(T v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  template <class T>
  void put_array(std::span<const T> v) {
    if (!v.empty()) os_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
  }
  void put_sizes(std::span<const std::size_t> v) {
    for (auto x : v) put<std::uint64_t>(x);
  }

 private:
  std::ostream& os_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::istream& is) : is_(is) {}
  template <class T>
  T get() {
    T v{};
    is_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is_) throw std::runtime_error("KVB1: truncated file");
    return v;
  }
  template <class T>
  std::vector<T> get_array(std::uint64_t n) {
    if (n > (1ull << 34)) throw std::runtime_error("KVB1: implausible array length");
    std::vector<T> v(n);
    if (n) is_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
    if (!is_) throw std::runtime_error("KVB1: truncated file");
    return v;
  }
  std::vector<std::size_t> get_sizes(std::uint64_t n) {
    auto raw = get_array<std::uint64_t>(n);
    return {raw.begin(), raw.end()};
  }

 private:
  std::istream& is_;
};

}  // namespace detail

constexpr char kBatchMagic[4] = {'K', 'V', 'B', '1'};
constexpr std::uint32_t kBatchVersion = 1;

inline void write_batch(std::ostream& os, const BatchFile& file) {
  const SparseBatch& s = file.sparse;
  s.validate();
  detail::BinaryWriter w(os);
  os.write(kBatchMagic, 4);
  w.put<std::uint32_t>(kBatchVersion);
  w.put<std::uint64_t>(file.schemes.time.boundaries().size());
  w.put_array<std::int64_t>(file.schemes.time.boundaries());
  w.put<std::uint64_t>(file.schemes.count.boundaries().size());
  w.put_array<std::int64_t>(file.schemes.count.boundaries());
  w.put<std::uint64_t>(s.batch_size());
  w.put<std::uint64_t>(s.num_entries());
  w.put<std::uint64_t>(s.num_fields);
  w.put_sizes(s.row_offsets);
  w.put_array<std::int64_t>(s.keys);
  w.put_array<std::int64_t>(s.time_bucket);
  w.put_array<std::int64_t>(s.count_bucket);
  w.put_array<std::int64_t>(s.category);
  w.put_array<std::int64_t>(s.counts);
  w.put_array<std::uint8_t>(s.labels);
  w.put_array<std::int64_t>(s.target_key);
  w.put_array<std::int64_t>(s.target_category);
  w.put_array<std::int64_t>(s.other_features);
  w.put<std::uint8_t>(file.dense ? 1 : 0);
  if (file.dense) {
    const DenseBatch& d = *file.dense;
    if (d.batch_size() != s.batch_size()) throw std::invalid_argument("write_batch: dense/sparse batch size differ");
    w.put<std::uint64_t>(d.max_len);
    w.put_sizes(d.lengths);
    w.put_array<std::int64_t>(d.keys);
  }
  if (!os) throw std::runtime_error("write_batch: stream error");
}

inline BatchFile read_batch(std::istream& is) {
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kBatchMagic, 4) != 0) throw std::runtime_error("read_batch: missing KVB1 magic");
  detail::BinaryReader r(is);
  const auto version = r.get<std::uint32_t>();
  if (version != kBatchVersion) throw std::runtime_error("read_batch: unsupported version " + std::to_string(version));
  BatchFile file;
  file.schemes.time = TimeBucketScheme(r.get_array<std::int64_t>(r.get<std::uint64_t>()));
  file.schemes.count = CountBucketScheme(r.get_array<std::int64_t>(r.get<std::uint64_t>()));
  SparseBatch& s = file.sparse;
  const auto b = r.get<std::uint64_t>();
  const auto n = r.get<std::uint64_t>();
  s.num_fields = r.get<std::uint64_t>();
  s.row_offsets = r.get_sizes(b + 1);
  s.keys = r.get_array<std::int64_t>(n);
  s.time_bucket = r.get_array<std::int64_t>(n);
  s.count_bucket = r.get_array<std::int64_t>(n);
  s.category = r.get_array<std::int64_t>(n);
  s.counts = r.get_array<std::int64_t>(n);
  s.labels = r.get_array<std::uint8_t>(b);
  s.target_key = r.get_array<std::int64_t>(b);
  s.target_category = r.get_array<std::int64_t>(b);
  s.other_features = r.get_array<std::int64_t>(b * s.num_fields);
  s.validate();
  if (r.get<std::uint8_t>()) {
    DenseBatch d;
    d.max_len = r.get<std::uint64_t>();
    d.lengths = r.get_sizes(b);
    d.keys = r.get_array<std::int64_t>(b * d.max_len);
    for (const auto len : d.lengths) {
      if (len > d.max_len) throw std::runtime_error("read_batch: dense row longer than max_len");
    }
    d.labels = s.labels;
    d.target_key = s.target_key;
    d.target_category = s.target_category;
    d.num_fields = s.num_fields;
    d.other_features = s.other_features;
    file.dense = std::move(d);
  }
  return file;
}

inline void write_batch_file(const std::string& path, const BatchFile& file) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_batch(os, file);
}

inline BatchFile read_batch_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  return read_batch(is);
}

}  // namespace dinmp
