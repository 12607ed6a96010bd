// Copyright (C) 2026 The DINMP Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dinmp/ingest.hpp"
#include "dinmp/metrics.hpp"
#include "dinmp/reports.hpp"
#include "dinmp/synth.hpp"

namespace dinmp {
namespace {

namespace fs = std::filesystem;

GeneratorConfig small_generator(std::uint64_t seed = 1) {
  GeneratorConfig g;
  g.seed = seed;
  g.num_users = 300;
  g.num_keys = 400;
  g.num_categories = 10;
  return g;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) : path_(fs::temp_directory_path() / ("dinmp_synth_" + tag)) {
    fs::remove_all(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

IngestResult ingest_all(const GeneratedData& g) {
  IngestOptions opt;
  opt.truncate_len = 0;
  return ingest(g.events, g.samples, opt);
}

TEST(Generate, SameSeedWritesIdenticalFiles) {
  RunConfig rc;
  rc.generator = small_generator(5);
  TempDir a("a"), b("b");
  write_dataset(a.path(), rc, generate(rc.generator));
  write_dataset(b.path(), rc, generate(rc.generator));
  for (const char* name : {kEventsFile, kTrainSamplesFile, kTestSamplesFile, kManifestFile}) {
    const std::string x = slurp(a.path() / name);
    EXPECT_FALSE(x.empty()) << name;
    EXPECT_EQ(x, slurp(b.path() / name)) << name;
  }
}

TEST(Generate, DifferentSeedsDiffer) {
  const GeneratedData a = generate(small_generator(1)), b = generate(small_generator(2));
  EXPECT_NE(a.events, b.events);
}

TEST(Generate, NoDuplicationMeansUnitCounts) {
  GeneratorConfig g = small_generator();
  g.duplication = 1.0;
  const GeneratedData data = generate(g);
  const IngestResult r = ingest_all(data);
  ASSERT_GT(r.batch.sparse.num_entries(), 0u);
  for (auto c : r.batch.sparse.counts) ASSERT_EQ(c, 1);
  EXPECT_DOUBLE_EQ(r.stats.avg_behaviors, r.stats.avg_keys);
}

TEST(Generate, CompressionTracksDuplication) {
  GeneratorConfig g = small_generator(3);
  g.num_users = 200;  // about 10k events
  const GeneratedData data = generate(g);
  EXPECT_GT(data.events.size(), 8000u);
  const IngestResult r = ingest_all(data);
  const double ratio = r.stats.avg_behaviors / r.stats.avg_keys;
  EXPECT_GE(ratio, 3.6);
  EXPECT_LE(ratio, 4.4);
}

TEST(Generate, PositiveRateNearTarget) {
  const GeneratedData data = generate(small_generator(4));
  EXPECT_NEAR(data.positive_rate, 0.25, 0.02);
  std::size_t pos = 0;
  for (const auto& s : data.samples) pos += s.label;
  EXPECT_DOUBLE_EQ(data.positive_rate, static_cast<double>(pos) / static_cast<double>(data.samples.size()));
}

TEST(Generate, TrueScoreSeparatesTestDay) {
  GeneratorConfig g = small_generator(6);
  g.num_users = 1000;
  const GeneratedData data = generate(g);
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    if (data.samples[i].reference_time < data.test_start) continue;
    scores.push_back(data.true_logits[i]);
    labels.push_back(data.samples[i].label);
  }
  ASSERT_GT(scores.size(), 500u);
  EXPECT_GT(auc(scores, labels, TiePolicy::half_credit), 0.9);
}

TEST(Generate, HistoriesAndSplit) {
  const GeneratorConfig g = small_generator(7);
  const GeneratedData data = generate(g);
  EXPECT_EQ(data.samples.size(), g.num_users * g.samples_per_user);
  std::size_t test = 0;
  for (const auto& s : data.samples) {
    EXPECT_GE(s.reference_time, data.test_start - static_cast<std::int64_t>(g.sample_days * kSecondsPerDay));
    EXPECT_LT(s.reference_time, g.epoch + static_cast<std::int64_t>(g.horizon_days * kSecondsPerDay));
    EXPECT_EQ(synthetic_category(s.target_key, g.num_categories), s.target_category);
    test += s.reference_time >= data.test_start;
  }
  EXPECT_GT(test, 0u);
  EXPECT_LT(test, data.samples.size());
  for (const auto& e : data.events) EXPECT_EQ(synthetic_category(e.key_id, g.num_categories), e.category_id);
}

TEST(Generate, SummariesMatchIngest) {
  const GeneratedData data = generate(small_generator(8));
  const IngestResult r = ingest_all(data);
  EXPECT_NEAR(r.stats.avg_behaviors, data.mean_history_events, 1e-9);
  EXPECT_NEAR(r.stats.avg_keys, data.mean_history_keys, 1e-9);
}

TEST(Generate, ManifestRecordsParameters) {
  RunConfig rc;
  rc.seed = 9;
  rc.generator = small_generator(9);
  const GeneratedData data = generate(rc.generator);
  const Json m = manifest_json(rc, data);
  EXPECT_EQ(m.at("seed"), 9);
  EXPECT_EQ(m.at("generator").at("num_users"), 300);
  EXPECT_EQ(m.at("num_samples"), data.samples.size());
  EXPECT_EQ(m.at("num_train_samples").get<std::size_t>() + m.at("num_test_samples").get<std::size_t>(),
            data.samples.size());
  EXPECT_DOUBLE_EQ(m.at("mean_history_events").get<double>(), data.mean_history_events);
}

TEST(Generate, AffinityWeighsRecency) {
  const std::int64_t ref = 100 * kSecondsPerDay;
  const std::vector<KeyVectorEntry> entries = {
      {1, ref - 10 * kSecondsPerDay, 2, 3}, {2, ref - 20 * kSecondsPerDay, 1, 3}, {3, ref - kSecondsPerDay, 5, 4}};
  // 2·2^(-1) + 1·2^(-2) with a 10-day half-life
  EXPECT_DOUBLE_EQ(true_affinity(entries, 3, ref, 10.0), 1.25);
  EXPECT_DOUBLE_EQ(true_affinity(entries, 7, ref, 10.0), 0.0);
}

TEST(Generate, InvalidConfigThrows) {
  auto bad = [](auto edit) {
    GeneratorConfig g = small_generator();
    edit(g);
    return g;
  };
  EXPECT_THROW(generate(bad([](auto& g) { g.num_users = 0; })), std::invalid_argument);
  EXPECT_THROW(generate(bad([](auto& g) { g.num_keys = 5; })), std::invalid_argument);
  EXPECT_THROW(generate(bad([](auto& g) { g.duplication = 0.5; })), std::invalid_argument);
  EXPECT_THROW(generate(bad([](auto& g) { g.recency_half_life_days = 0.0; })), std::invalid_argument);
  EXPECT_THROW(generate(bad([](auto& g) { g.sample_days = 300.0; })), std::invalid_argument);
  EXPECT_THROW(generate(bad([](auto& g) { g.drift_rate = -0.1; })), std::invalid_argument);
  EXPECT_THROW(generate(bad([](auto& g) { g.target_from_preference = 1.5; })), std::invalid_argument);
}

}  // namespace
}  // namespace dinmp
