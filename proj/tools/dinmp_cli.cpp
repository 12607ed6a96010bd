// Copyright (C) 2026 The DINMP Authors
// SPDX-License-Identifier: Apache-2.0

// dinmp: generate, convert, train, eval, ablate and export-time-factors.
// Reports go to files or stdout as JSON/CSV; failures print a JSON error
// object on stderr and exit nonzero.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "dinmp/dinmp.hpp"

namespace {

using dinmp::Json;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string variant;
  std::string interaction;
  std::optional<std::size_t> truncate_len;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "Run config JSON")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Overrides the config seed");
  cmd->add_option("--variant", o.variant, "DIN, DINSKV, EDIN, DINTP or DINMP");
  cmd->add_option("--interaction", o.interaction, "concat or self_attention");
  cmd->add_option("--truncate-len", o.truncate_len, "DIN sequence truncation (0 keeps everything)");
}

dinmp::RunConfig run_config(const CommonOptions& o) {
  dinmp::RunConfig rc = o.config.empty() ? dinmp::RunConfig{} : dinmp::load_run_config(o.config);
  if (o.seed) {
    rc.seed = *o.seed;
    rc.model.seed = *o.seed;
    rc.generator.seed = *o.seed;
  }
  if (!o.variant.empty()) rc.model.variant = dinmp::parse_variant(o.variant);
  if (!o.interaction.empty()) rc.model.interaction = dinmp::parse_interaction(o.interaction);
  if (o.truncate_len) rc.data.truncate_len = *o.truncate_len;
  return rc;
}

/// Writes to `path`, or stdout when it is empty or "-".
template <class F>
void emit(const std::string& path, F&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  write(os);
  if (!os) throw std::runtime_error("failed writing '" + path + "'");
}

void emit_json(const std::string& path, const Json& j) {
  emit(path, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
}

Json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  return Json::parse(is);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Key-vector interest models for click-through prediction"};
  app.require_subcommand(1);
  std::string command;

  // generate
  CommonOptions gen_opt;
  std::string gen_out;
  auto* gen = app.add_subcommand("generate", "Write a synthetic corpus (events, time-split samples, manifest)");
  add_common(gen, gen_opt);
  gen->add_option("--out", gen_out, "Output directory")->required();

  // convert
  CommonOptions conv_opt;
  std::string conv_events, conv_samples, conv_out, conv_stats;
  auto* conv = app.add_subcommand("convert", "Compact events and samples into a batch file");
  add_common(conv, conv_opt);
  conv->add_option("--events", conv_events, "Events CSV")->required()->check(CLI::ExistingFile);
  conv->add_option("--samples", conv_samples, "Samples CSV")->required()->check(CLI::ExistingFile);
  conv->add_option("--out", conv_out, "Output batch file")->required();
  conv->add_option("--stats", conv_stats, "Statistics report (default stdout)");

  // stats
  CommonOptions stats_opt;
  std::string stats_events, stats_samples, stats_out;
  auto* stats = app.add_subcommand("stats", "Report #behavior / #key statistics without writing a batch");
  add_common(stats, stats_opt);
  stats->add_option("--events", stats_events, "Events CSV")->required()->check(CLI::ExistingFile);
  stats->add_option("--samples", stats_samples, "Samples CSV")->required()->check(CLI::ExistingFile);
  stats->add_option("--out", stats_out, "Report path (default stdout)");

  // train
  CommonOptions train_opt;
  std::string train_data, train_valid, train_out, train_log;
  auto* tr = app.add_subcommand("train", "Train one variant and write a checkpoint");
  add_common(tr, train_opt);
  tr->add_option("--data", train_data, "Training batch file")->required()->check(CLI::ExistingFile);
  tr->add_option("--validation", train_valid, "Batch file evaluated after every epoch")->check(CLI::ExistingFile);
  tr->add_option("--out", train_out, "Checkpoint path")->required();
  tr->add_option("--log", train_log, "Per-epoch JSON lines (default stdout)");

  // eval
  std::string eval_ckpt, eval_data, eval_baseline, eval_out;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a batch file");
  ev->add_option("--checkpoint", eval_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", eval_data, "Batch file")->required()->check(CLI::ExistingFile);
  ev->add_option("--baseline", eval_baseline, "Report of the base model for RelaImpr")->check(CLI::ExistingFile);
  ev->add_option("--out", eval_out, "Report path (default stdout)");

  // ablate
  CommonOptions abl_opt;
  std::string abl_data, abl_out, abl_csv;
  auto* abl = app.add_subcommand("ablate", "Train all five variants on a generated corpus");
  add_common(abl, abl_opt);
  abl->add_option("--data", abl_data, "Corpus directory written by generate")->required()->check(CLI::ExistingDirectory);
  abl->add_option("--out", abl_out, "JSON table (default stdout)");
  abl->add_option("--csv", abl_csv, "Also write the table as CSV");

  // export-time-factors
  std::string tf_ckpt, tf_data, tf_out;
  std::size_t tf_samples = 4096;
  auto* tf = app.add_subcommand("export-time-factors", "Per-time-bucket factors of a trained checkpoint");
  tf->add_option("--checkpoint", tf_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  tf->add_option("--data", tf_data, "Batch file supplying the behavior sample")->check(CLI::ExistingFile);
  tf->add_option("--max-samples", tf_samples, "Rows of --data to use");
  tf->add_option("--out", tf_out, "CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << Json{{"error", e.what()}, {"kind", "usage"}}.dump() << '\n';
    return 2;
  }

  try {
    if (gen->parsed()) {
      command = "generate";
      const dinmp::RunConfig rc = run_config(gen_opt);
      const dinmp::GeneratedData g = dinmp::generate(rc.generator);
      dinmp::write_dataset(gen_out, rc, g);
      std::cout << dinmp::manifest_json(rc, g).dump(2) << '\n';
    } else if (conv->parsed() || stats->parsed()) {
      const bool write = conv->parsed();
      command = write ? "convert" : "stats";
      const dinmp::RunConfig rc = run_config(write ? conv_opt : stats_opt);
      const auto events = dinmp::read_events_file(write ? conv_events : stats_events);
      const auto samples = dinmp::read_samples_file(write ? conv_samples : stats_samples);
      const auto result =
          dinmp::ingest(events, samples, dinmp::ingest_options(rc), rc.data.key_thresholds, rc.data.behavior_thresholds);
      if (write) dinmp::write_batch_file(conv_out, result.batch);
      emit_json(write ? conv_stats : stats_out, dinmp::stats_json(result.stats));
    } else if (tr->parsed()) {
      command = "train";
      const dinmp::RunConfig rc = run_config(train_opt);
      const dinmp::BatchFile data = dinmp::read_batch_file(train_data);
      std::optional<dinmp::BatchFile> valid;
      if (!train_valid.empty()) valid = dinmp::read_batch_file(train_valid);
      const dinmp::ModelConfig mc =
          valid ? dinmp::resolve_model_config(rc, data, *valid) : dinmp::resolve_model_config(rc, data);
      const dinmp::InterestModel model(mc);
      dinmp::ParameterStore store = model.init_params();
      emit(train_log, [&](std::ostream& os) {
        dinmp::train(model, store, data, dinmp::train_options(rc), valid ? &*valid : nullptr,
                     [&](const dinmp::EpochLog& e) { os << dinmp::epoch_json(e).dump() << '\n' << std::flush; });
      });
      dinmp::save_checkpoint(train_out, rc, mc, store);
    } else if (ev->parsed()) {
      command = "eval";
      const dinmp::Checkpoint ck = dinmp::load_checkpoint(eval_ckpt);
      const dinmp::InterestModel model(ck.config.model);
      const dinmp::BatchFile data = dinmp::read_batch_file(eval_data);
      const dinmp::EvalReport r = dinmp::evaluate(model, ck.params, data);
      std::optional<Json> base;
      if (!eval_baseline.empty()) base = read_json(eval_baseline);
      emit_json(eval_out, dinmp::eval_report_json(ck.config.model.variant, r, base ? &*base : nullptr));
    } else if (abl->parsed()) {
      command = "ablate";
      const dinmp::RunConfig rc = run_config(abl_opt);
      const dinmp::Dataset ds = dinmp::load_dataset(abl_data, rc);
      const auto rows = dinmp::run_ablation(rc, ds.train, ds.test);
      emit_json(abl_out, dinmp::ablation_json(rows));
      if (!abl_csv.empty()) emit(abl_csv, [&](std::ostream& os) { dinmp::write_ablation_csv(os, rows); });
    } else if (tf->parsed()) {
      command = "export-time-factors";
      const dinmp::Checkpoint ck = dinmp::load_checkpoint(tf_ckpt);
      const dinmp::InterestModel model(ck.config.model);
      std::optional<dinmp::BatchFile> data;
      if (!tf_data.empty()) data = dinmp::read_batch_file(tf_data);
      const auto rows = dinmp::export_time_factors(model, ck.params, ck.config.data.schemes().time,
                                                   data ? &*data : nullptr, tf_samples);
      emit(tf_out, [&](std::ostream& os) { dinmp::write_time_factors_csv(os, rows); });
    }
  } catch (const dinmp::NonFiniteLoss& e) {
    std::cerr << Json{{"error", e.what()}, {"command", command}, {"step", e.step()}}.dump() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << Json{{"error", e.what()}, {"command", command}}.dump() << '\n';
    return 1;
  }
  return 0;
}
