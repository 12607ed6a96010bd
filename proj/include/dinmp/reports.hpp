// Copyright (C) 2026 The DINMP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dinmp/config.hpp"
#include "dinmp/ingest.hpp"
#include "dinmp/synth.hpp"
#include "dinmp/train.hpp"

namespace dinmp {

inline constexpr const char* kEventsFile = "events.csv";
inline constexpr const char* kTrainSamplesFile = "train_samples.csv";
inline constexpr const char* kTestSamplesFile = "test_samples.csv";
inline constexpr const char* kManifestFile = "manifest.json";

inline Json stats_json(const DatasetStats& s) {
  Json keys = Json::array(), behaviors = Json::array();
  for (const auto& f : s.key_fractions) keys.push_back({{"threshold", f.threshold}, {"fraction_below", f.fraction}});
  for (const auto& f : s.behavior_fractions) {
    behaviors.push_back({{"threshold", f.threshold}, {"fraction_below", f.fraction}});
  }
  return {{"num_samples", s.num_samples},
          {"max_behaviors", s.max_behaviors},
          {"avg_behaviors", s.avg_behaviors},
          {"max_keys", s.max_keys},
          {"avg_keys", s.avg_keys},
          {"compression_ratio", s.compression_ratio()},
          {"key_fractions", keys},
          {"behavior_fractions", behaviors}};
}

/// Generation parameters plus ground-truth summaries of one synthetic corpus.
inline Json manifest_json(const RunConfig& rc, const GeneratedData& g) {
  std::size_t train = 0;
  for (const auto& s : g.samples) train += s.reference_time < g.test_start;
  return {{"generator", to_json(rc).at("generator")},
          {"seed", rc.seed},
          {"files", {{"events", kEventsFile}, {"train_samples", kTrainSamplesFile}, {"test_samples", kTestSamplesFile}}},
          {"num_events", g.events.size()},
          {"num_samples", g.samples.size()},
          {"num_train_samples", train},
          {"num_test_samples", g.samples.size() - train},
          {"test_start", g.test_start},
          {"intercept", g.intercept},
          {"positive_rate", g.positive_rate},
          {"mean_history_events", g.mean_history_events},
          {"mean_history_keys", g.mean_history_keys}};
}

/// Writes events, the time-split sample files and the manifest into `dir`.
inline void write_dataset(const std::filesystem::path& dir, const RunConfig& rc, const GeneratedData& g) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream os(dir / name);
    if (!os) throw std::runtime_error("cannot open '" + (dir / name).string() + "' for writing");
    return os;
  };
  std::vector<SampleRecord> train, test;
  for (const auto& s : g.samples) (s.reference_time < g.test_start ? train : test).push_back(s);
  auto events = open(kEventsFile);
  write_events_csv(events, g.events);
  auto train_os = open(kTrainSamplesFile);
  write_samples_csv(train_os, train);
  auto test_os = open(kTestSamplesFile);
  write_samples_csv(test_os, test);
  auto manifest = open(kManifestFile);
  manifest << manifest_json(rc, g).dump(2) << '\n';
}

inline IngestOptions ingest_options(const RunConfig& rc) {
  return {rc.data.schemes(), rc.data.type_filter(), true, rc.data.truncate_len};
}

struct Dataset {
  BatchFile train;
  BatchFile test;
  DatasetStats train_stats;
};

/// Reads a directory written by write_dataset and compacts both splits.
inline Dataset load_dataset(const std::filesystem::path& dir, const RunConfig& rc) {
  const auto events = read_events_file((dir / kEventsFile).string());
  const auto train = read_samples_file((dir / kTrainSamplesFile).string());
  const auto test = read_samples_file((dir / kTestSamplesFile).string());
  const IngestOptions opt = ingest_options(rc);
  auto tr = ingest(events, train, opt, rc.data.key_thresholds, rc.data.behavior_thresholds);
  auto te = ingest(events, test, opt);
  return {std::move(tr.batch), std::move(te.batch), tr.stats};
}

inline Json epoch_json(const EpochLog& e) {
  Json j = {{"epoch", e.epoch}, {"train_loss", e.train_loss}};
  if (e.eval_auc) j["eval_auc"] = *e.eval_auc;
  return j;
}

/// Evaluation report. With a baseline report, RelaImpr is measured against
/// the baseline's AUC.
inline Json eval_report_json(ModelVariant variant, const EvalReport& r, const Json* baseline = nullptr) {
  Json j = {{"variant", to_string(variant)},
            {"auc", r.auc ? Json(*r.auc) : Json(nullptr)},
            {"log_loss", r.log_loss},
            {"num_samples", r.num_samples},
            {"num_positive", r.num_positive},
            {"num_negative", r.num_negative}};
  if (!r.auc_error.empty()) j["auc_error"] = r.auc_error;
  if (baseline) {
    const Json& base_auc = baseline->at("auc");
    Json rel = {{"base_variant", baseline->value("variant", "unknown")}, {"value", nullptr}};
    if (r.auc && base_auc.is_number()) {
      const double b = base_auc.get<double>();
      if (b != 0.5) {
        rel["value"] = round2(rela_impr(*r.auc, b));
      } else {
        rel["error"] = "baseline AUC is 0.5";
      }
    } else {
      rel["error"] = "AUC unavailable";
    }
    j["rela_impr"] = rel;
  }
  return j;
}

inline Json ablation_json(std::span<const AblationRow> rows) {
  Json out = Json::array();
  for (const auto& r : rows) {
    out.push_back({{"variant", to_string(r.variant)}, {"auc", r.auc}, {"rela_impr", r.rela_impr}, {"log_loss", r.log_loss}});
  }
  return {{"base_variant", "DIN"}, {"rows", out}};
}

inline void write_ablation_csv(std::ostream& os, std::span<const AblationRow> rows) {
  os << "variant,auc,rela_impr,log_loss\n";
  for (const auto& r : rows) os << to_string(r.variant) << ',' << r.auc << ',' << r.rela_impr << ',' << r.log_loss << '\n';
}

inline void write_time_factors_csv(std::ostream& os, std::span<const TimeFactorRow> rows) {
  os << "bucket,label,factor,contribution\n";
  const auto precision = os.precision(17);
  for (const auto& r : rows) os << r.bucket << ',' << r.label << ',' << r.factor << ',' << r.contribution << '\n';
  os.precision(precision);
}

}  // namespace dinmp
