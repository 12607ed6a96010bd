// Copyright (C) 2026 The DINMP Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <sstream>

#include "dinmp/ingest.hpp"

namespace dinmp {
namespace {

// 3 users, 9 events. User 1's buy is filtered out and user 2's second click
// happens after every reference time.
constexpr const char* kEvents =
    "user_id,key_id,category_id,timestamp,event_type\n"
    "0,1,5,100,click\n"
    "0,1,5,200,click\n"
    "0,2,6,150,click\n"
    "1,3,7,50,click\n"
    "1,3,7,60,click\n"
    "1,3,7,70,ipv\n"
    "1,4,7,80,buy\n"
    "2,5,8,10,click\n"
    "2,5,8,500,click\n";

constexpr const char* kSamples =
    "user_id,target_key,target_category,label,reference_time,other_features\n"
    "0,2,6,1,300,1;4\n"
    "1,9,7,0,300,0;2\n"
    "2,5,8,1,300,3;3\n"
    "9,1,5,0,300,2;0\n";

IngestResult ingest_fixture(std::size_t truncate_len = 20) {
  std::istringstream ev(kEvents), sm(kSamples);
  const auto events = read_events_csv(ev);
  const auto samples = read_samples_csv(sm);
  IngestOptions opt;
  opt.truncate_len = truncate_len;
  const std::vector<std::int64_t> key_thr = {1, 2}, beh_thr = {2};
  return ingest(events, samples, opt, key_thr, beh_thr);
}

TEST(Csv, ReadsEvents) {
  std::istringstream is(kEvents);
  const auto events = read_events_csv(is);
  ASSERT_EQ(events.size(), 9u);
  EXPECT_EQ(events[0], (BehaviorEvent{0, 1, 5, 100, EventType::click}));
  EXPECT_EQ(events[5].type, EventType::click);
  EXPECT_EQ(events[6].type, EventType::buy);
}

TEST(Csv, ReadsSamples) {
  std::istringstream is(kSamples);
  const auto samples = read_samples_csv(is);
  ASSERT_EQ(samples.size(), 4u);
  EXPECT_EQ(samples[0].other_features, (std::vector<std::int64_t>{1, 4}));
  EXPECT_EQ(samples[0].label, 1);
  EXPECT_EQ(samples[3].user_id, 9);
}

TEST(Csv, RoundTrips) {
  std::istringstream ev(kEvents), sm(kSamples);
  const auto events = read_events_csv(ev);
  const auto samples = read_samples_csv(sm);
  std::ostringstream ev_out, sm_out;
  write_events_csv(ev_out, events);
  write_samples_csv(sm_out, samples);
  std::istringstream ev_in(ev_out.str()), sm_in(sm_out.str());
  EXPECT_EQ(read_events_csv(ev_in), events);
  EXPECT_EQ(read_samples_csv(sm_in), samples);
}

TEST(Csv, ToleratesCrlfAndBlankLines) {
  std::istringstream is(
      "user_id,key_id,category_id,timestamp,event_type\r\n"
      "0,1,5,100,click\r\n"
      "\r\n"
      "0,2,5,101,click\r\n");
  EXPECT_EQ(read_events_csv(is).size(), 2u);
}

// Returns the line number reported by the reader, or 0 if it did not throw.
template <class Reader>
std::size_t error_line(const std::string& text, Reader read) {
  std::istringstream is(text);
  try {
    read(is);
  } catch (const CsvError& e) {
    return e.line();
  }
  return 0;
}

TEST(Csv, MalformedEventsReportLine) {
  auto read = [](std::istream& is) { return read_events_csv(is); };
  const std::string header = "user_id,key_id,category_id,timestamp,event_type\n";
  EXPECT_EQ(error_line("", read), 1u);
  EXPECT_EQ(error_line("user,key\n0,1\n", read), 1u);
  EXPECT_EQ(error_line(header + "0,1,5,100,click\n0,1,5,click\n", read), 3u);
  EXPECT_EQ(error_line(header + "0,1,5,10x,click\n", read), 2u);
  EXPECT_EQ(error_line(header + "0,-1,5,100,click\n", read), 2u);
  EXPECT_EQ(error_line(header + "0,1,5,100,view\n", read), 2u);
  EXPECT_EQ(error_line(header + "0,1,5,100,click\n", read), 0u);
}

TEST(Csv, MalformedSamplesReportLine) {
  auto read = [](std::istream& is) { return read_samples_csv(is); };
  const std::string header = "user_id,target_key,target_category,label,reference_time,other_features\n";
  EXPECT_EQ(error_line(header + "0,1,2,2,300,1\n", read), 2u);
  EXPECT_EQ(error_line(header + "0,1,2,1,300,1\n0,1,2,1,300,1;x\n", read), 3u);
  EXPECT_EQ(error_line(header + "0,1,2,1,300\n", read), 2u);
  EXPECT_EQ(error_line(header + "0,1,2,1,300,\n", read), 0u);
}

TEST(Csv, ErrorMessageNamesSourceAndLine) {
  std::istringstream is("user_id,key_id,category_id,timestamp,event_type\n0,1,5,abc,click\n");
  try {
    read_events_csv(is, "log.csv");
    FAIL() << "expected an error";
  } catch (const CsvError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("log.csv:2:", 0), 0u) << e.what();
  }
}

TEST(Ingest, TinyFixtureStatsByHand) {
  const IngestResult r = ingest_fixture();
  // Per sample (#key, #behavior): (2, 3), (1, 3), (1, 1), (0, 0).
  EXPECT_EQ(r.stats.num_samples, 4u);
  EXPECT_DOUBLE_EQ(r.stats.avg_keys, 1.0);
  EXPECT_DOUBLE_EQ(r.stats.avg_behaviors, 1.75);
  EXPECT_EQ(r.stats.max_keys, 2);
  EXPECT_EQ(r.stats.max_behaviors, 3);
  ASSERT_EQ(r.stats.key_fractions.size(), 2u);
  EXPECT_DOUBLE_EQ(r.stats.key_fractions[0].fraction, 0.25);
  EXPECT_DOUBLE_EQ(r.stats.key_fractions[1].fraction, 0.75);
  EXPECT_DOUBLE_EQ(r.stats.behavior_fractions[0].fraction, 0.5);
  EXPECT_LT(r.stats.avg_keys, r.stats.avg_behaviors);
}

TEST(Ingest, BuildsSparseRows) {
  const IngestResult r = ingest_fixture();
  const SparseBatch& b = r.batch.sparse;
  EXPECT_EQ(b.row_offsets, (std::vector<std::size_t>{0, 2, 3, 4, 4}));
  EXPECT_EQ(b.keys, (std::vector<std::int64_t>{1, 2, 3, 5}));
  EXPECT_EQ(b.counts, (std::vector<std::int64_t>{2, 1, 3, 1}));
  EXPECT_EQ(b.category, (std::vector<std::int64_t>{5, 6, 7, 8}));
  EXPECT_EQ(b.time_bucket, (std::vector<std::int64_t>{0, 0, 0, 0}));
  EXPECT_EQ(b.count_bucket, (std::vector<std::int64_t>{1, 0, 1, 0}));
  EXPECT_EQ(b.num_fields, 2u);
  EXPECT_EQ(b.other_features, (std::vector<std::int64_t>{1, 4, 0, 2, 3, 3, 2, 0}));
}

TEST(Ingest, DenseRowsKeepRawOrder) {
  const IngestResult r = ingest_fixture(2);
  ASSERT_TRUE(r.batch.dense.has_value());
  const DenseBatch& d = *r.batch.dense;
  EXPECT_EQ(d.max_len, 2u);
  EXPECT_EQ(d.lengths, (std::vector<std::size_t>{2, 2, 1, 0}));
  EXPECT_EQ(d.keys, (std::vector<std::int64_t>{2, 1, 3, 3, 5, 0, 0, 0}));
  const IngestResult full = ingest_fixture(0);
  EXPECT_EQ(full.batch.dense->lengths, (std::vector<std::size_t>{3, 3, 1, 0}));
}

TEST(Ingest, TypeFilterWidens) {
  std::istringstream ev(kEvents), sm(kSamples);
  const auto events = read_events_csv(ev);
  const auto samples = read_samples_csv(sm);
  IngestOptions opt;
  opt.type_filter = {EventType::click, EventType::buy};
  const IngestResult r = ingest(events, samples, opt);
  EXPECT_EQ(r.batch.sparse.row_length(1), 2u);
}

TEST(Ingest, RejectsEmptySamples) {
  EXPECT_THROW(ingest({}, {}, IngestOptions{}), std::invalid_argument);
}

TEST(Stats, Examples) {
  const std::vector<std::vector<KeyVectorEntry>> one = {{{1, 0, 2, 0}, {2, 0, 1, 0}}};
  const DatasetStats a = dataset_stats(one);
  EXPECT_DOUBLE_EQ(a.avg_behaviors, 3.0);
  EXPECT_DOUBLE_EQ(a.avg_keys, 2.0);
  EXPECT_DOUBLE_EQ(a.compression_ratio(), 1.5);

  const std::vector<std::vector<KeyVectorEntry>> two = {{{1, 0, 1, 0}}, {{1, 0, 1, 0}, {2, 0, 1, 0}, {3, 0, 1, 0}}};
  const DatasetStats b = dataset_stats(two);
  EXPECT_EQ(b.max_keys, 3);
  EXPECT_DOUBLE_EQ(b.avg_keys, 2.0);
  EXPECT_THROW(dataset_stats({}), std::invalid_argument);
}

}  // namespace
}  // namespace dinmp
