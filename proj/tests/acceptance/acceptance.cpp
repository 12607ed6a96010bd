// Copyright (C) 2026 The DINMP Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.
//
//   acceptance [--config configs/synthetic.json] [--cli path/to/dinmp] [--only 1,4,9]

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dinmp/dinmp.hpp"
#include "support/model_fixtures.hpp"

namespace {

using namespace dinmp;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

int failures = 0;

void report(int id, bool pass, const std::string& what, const std::string& detail) {
  std::cout << (pass ? "PASS" : "FAIL") << "  [" << id << "] " << what << ": " << detail << std::endl;
  failures += !pass;
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

// --- 1 ---------------------------------------------------------------------

void sparse_equals_dense() {
  std::mt19937_64 rng(101);
  const InterestModel din(testing::small_config(ModelVariant::din));
  const InterestModel skv(testing::small_config(ModelVariant::dinskv));
  double worst = 0.0;
  std::int64_t most_events = 0;
  for (int trial = 0; trial < 500; ++trial) {
    ParameterStore store = skv.init_params();
    testing::perturb(store, rng);
    const auto inst = testing::random_instance(rng, skv.config(), {.batch = 1, .max_keys = 8, .max_events = 20});
    std::int64_t events = 0;
    for (auto c : inst.sparse.counts) events += c;
    most_events = std::max(most_events, events);
    const double a = skv.predict(store, inst.sparse)[0], b = din.predict(store, inst.dense)[0];
    worst = std::max(worst, std::abs(a - b));
  }
  report(1, worst < 1e-10, "DINSKV forward equals dense DIN forward",
         fmt("max |diff| %.3g over 500 instances (<= %lld events, <= 8 keys)", worst, static_cast<long long>(most_events)));
}

// --- 2 ---------------------------------------------------------------------

double probe_loss(const Tensor& out, const Tensor& probe) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * probe[i];
  return s;
}

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t = Tensor::matrix(r, c);
  for (auto& v : t.values()) v = n(rng);
  return t;
}

// Worst relative error of the linear building blocks checked on their own.
double linear_parts_error(std::mt19937_64& rng) {
  double worst = 0.0;
  {
    ParameterStore store;
    store.add("table", random_matrix(40, 6, rng));
    const std::vector<std::int64_t> ids = {0, 5, 5, 39, 12, 7, 7, 7, 30};
    const std::vector<std::size_t> offsets = {0, 3, 3, 9};
    const Tensor probe = random_matrix(3, 6, rng);
    auto loss = [&] { return probe_loss(segment_sum(embedding_lookup(store.value("table"), ids), offsets), probe); };
    auto grads = [&] {
      store.zero_grad();
      embedding_lookup_backward(store.grad("table"), ids, segment_sum_backward(probe, offsets));
    };
    worst = std::max(worst, finite_diff_check(loss, grads, store, {.step = 1e-3}).worst());
  }
  {
    const Mlp net("linear", {8, 5}, {Activation::identity});
    ParameterStore store;
    net.register_params(store, rng);
    store.value("linear/b0") = random_matrix(1, 5, rng);
    store.add("x", random_matrix(4, 8, rng));
    const Tensor probe = random_matrix(4, 5, rng);
    auto loss = [&] { return probe_loss(net.forward(store, store.value("x")), probe); };
    auto grads = [&] {
      store.zero_grad();
      MlpCache cache;
      net.forward(store, store.value("x"), &cache);
      store.grad("x") = net.backward(store, cache, probe);
    };
    worst = std::max(worst, finite_diff_check(loss, grads, store, {.step = 1e-3}).worst());
  }
  return worst;
}

void gradient_checks() {
  struct Case {
    ModelVariant variant;
    Interaction interaction;
  };
  const std::vector<Case> cases = {{ModelVariant::din, Interaction::concat},
                                   {ModelVariant::dinskv, Interaction::concat},
                                   {ModelVariant::edin, Interaction::concat},
                                   {ModelVariant::dintp, Interaction::concat},
                                   {ModelVariant::dintp, Interaction::self_attention},
                                   {ModelVariant::dinmp, Interaction::concat},
                                   {ModelVariant::dinmp, Interaction::self_attention}};
  std::mt19937_64 rng(202);
  double worst = 0.0;
  bool coverage = true;
  std::string worst_case;
  for (const auto& c : cases) {
    ModelConfig cfg = testing::small_config(c.variant);
    cfg.interaction = c.interaction;
    const InterestModel model(cfg);
    ParameterStore store = model.init_params();
    testing::perturb(store, rng);
    const auto batch = testing::random_instance(rng, cfg, {.batch = 4});
    const GradCheckReport r = c.variant == ModelVariant::din ? testing::check_model_gradients(model, store, batch.dense)
                                                             : testing::check_model_gradients(model, store, batch.sparse);
    for (const auto& [name, n] : r.coords_checked) coverage &= n >= std::min<std::size_t>(32, store.value(name).size());
    if (r.worst() > worst) {
      worst = r.worst();
      worst_case = std::string(to_string(c.variant)) + "/" + std::string(to_string(c.interaction));
    }
  }
  const double linear = linear_parts_error(rng);
  report(2, worst < 1e-4 && linear < 1e-9 && coverage, "finite-difference gradient check, every variant",
         fmt("worst %.3g (%s), linear parts %.3g, coverage %s", worst, worst_case.c_str(), linear,
             coverage ? "ok" : "short"));
}

// --- 3 ---------------------------------------------------------------------

void partition_conservation() {
  std::mt19937_64 rng(303);
  const InterestModel model(testing::small_config(ModelVariant::dinmp));
  const std::size_t d = model.config().embedding_dim, t = model.config().time_buckets,
                    c = model.config().num_categories;
  ParameterStore store = model.init_params();
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    if (trial % 50 == 0) {
      store = model.init_params();
      testing::perturb(store, rng);
    }
    const auto batch = testing::random_instance(rng, model.config(), {.batch = 1 + rng() % 8, .max_keys = 12});
    ForwardCache cache;
    model.forward(store, batch.sparse, cache);
    const InterestVectors& iv = cache.interest;
    for (std::size_t i = 0; i < cache.batch; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        double st = 0.0, sc = 0.0;
        for (std::size_t k = 0; k < t; ++k) st += iv.time(i, k * d + j);
        for (std::size_t k = 0; k < c; ++k) sc += iv.category(i, k * d + j);
        worst = std::max({worst, std::abs(st - iv.global(i, j)), std::abs(sc - iv.global(i, j))});
      }
    }
  }
  report(3, worst < 1e-12, "time and category partitions sum to the global interest vector",
         fmt("max |diff| %.3g over 1000 batches", worst));
}

// --- 4 ---------------------------------------------------------------------

double brute_force_auc(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  std::uint64_t wins = 0, pos = 0, neg = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    (y[i] ? pos : neg) += 1;
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) wins += !y[j] && s[i] > s[j];
  }
  return static_cast<double>(wins) / (static_cast<double>(pos) * static_cast<double>(neg));
}

void auc_oracle() {
  std::mt19937_64 rng(404);
  int mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 499;
    const int levels = trial % 2 ? 5 : 1000;
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % levels) / levels;
      y[i] = static_cast<std::uint8_t>(rng() % 2);
    }
    y[0] = 1;
    y[1] = 0;
    mismatches += auc(s, y) != brute_force_auc(s, y);
  }
  const double tie = auc(std::vector<double>{0.5, 0.5}, std::vector<std::uint8_t>{1, 0});
  report(4, mismatches == 0 && tie == 0.0, "sort-based AUC equals brute force",
         fmt("%d/200 mismatches, tied pair gives %g", mismatches, tie));
}

// --- 5 ---------------------------------------------------------------------

void rela_impr_tables() {
  struct Row {
    const char* model;
    double auc, base, published;
  };
  const std::vector<Row> rows = {
      {"YoutubeNet", 0.6313, 0.6330, -1.28}, {"Wide&Deep", 0.6326, 0.6330, -0.30}, {"DIN", 0.6330, 0.6330, 0.00},
      {"DIEN", 0.6343, 0.6330, 0.98},        {"DSIN", 0.6375, 0.6330, 3.38},       {"DINMP", 0.6442, 0.6330, 8.42},
      {"Embedding&MLP", 0.8709, 0.8833, 3.24}, {"DIN", 0.8833, 0.8833, 0.00},    {"GRU4REC", 0.9006, 0.8833, 4.51},
      {"RUM", 0.9018, 0.8833, 4.83},         {"DIEN", 0.9081, 0.8833, 6.47},       {"MIMN", 0.9179, 0.8833, 9.03},
      {"DINMP", 0.9342, 0.8833, 13.28}};
  int ok = 0;
  std::string off;
  for (const auto& r : rows) {
    const double v = round2(rela_impr(r.auc, r.base));
    if (std::abs(v - r.published) <= 0.01 + 1e-12) {
      ++ok;
    } else {
      off += fmt(" %s computes %.2f vs %.2f;", r.model, v, r.published);
    }
  }
  report(5, ok == static_cast<int>(rows.size()), "RelaImpr reproduces the published AUC tables",
         fmt("%d/%zu rows within 0.01;", ok, rows.size()) + off);
}

// --- 6, 7, 8 ---------------------------------------------------------------

struct SeedResult {
  std::map<ModelVariant, double> auc;
  double compression = 0.0;
  double mean_history = 0.0;
  std::size_t samples = 0;
  bool recent_over_oldest = false;
  double recent = 0.0, oldest = 0.0;
};

SeedResult run_seed(RunConfig rc, std::uint64_t seed) {
  rc.seed = seed;
  rc.model.seed = seed;
  rc.generator.seed = seed;
  const GeneratedData g = generate(rc.generator);
  const IngestResult res = ingest(g.events, g.samples, ingest_options(rc));
  const BatchFile train_set = filter_rows(res.batch, [&](std::size_t i) { return g.samples[i].reference_time < g.test_start; });
  const BatchFile test_set = filter_rows(res.batch, [&](std::size_t i) { return g.samples[i].reference_time >= g.test_start; });

  SeedResult out;
  out.compression = res.stats.avg_behaviors / res.stats.avg_keys;
  out.mean_history = g.mean_history_events;
  out.samples = g.samples.size();
  for (const auto v : kAllVariants) {
    RunConfig cfg = rc;
    cfg.model.variant = v;
    const InterestModel model(resolve_model_config(cfg, train_set, test_set));
    ParameterStore store = model.init_params();
    const auto t0 = Clock::now();
    train(model, store, train_set, train_options(cfg));
    const EvalReport r = evaluate(model, store, test_set);
    out.auc[v] = r.auc.value_or(0.0);
    std::cerr << "  seed " << seed << ' ' << to_string(v) << " test AUC " << out.auc[v] << " ("
              << fmt("%.1f", seconds_since(t0)) << "s)" << std::endl;
    if (v == ModelVariant::dinmp) {
      const auto rows = export_time_factors(model, store, res.batch.schemes.time, &test_set);
      out.recent = rows.front().factor;
      out.oldest = rows.back().factor;
      out.recent_over_oldest = out.recent > out.oldest;
    }
  }
  return out;
}

void synthetic_ablation(const RunConfig& rc) {
  const auto t0 = Clock::now();
  std::vector<SeedResult> seeds;
  for (std::uint64_t s = 1; s <= 3; ++s) seeds.push_back(run_seed(rc, s));
  const double minutes = seconds_since(t0) / 60.0;

  std::map<ModelVariant, double> mean;
  for (const auto& s : seeds) {
    for (const auto& [v, a] : s.auc) mean[v] += a / 3.0;
  }
  const double din = mean[ModelVariant::din], skv = mean[ModelVariant::dinskv], edin = mean[ModelVariant::edin],
               mp = mean[ModelVariant::dinmp];
  std::size_t min_samples = seeds[0].samples;
  double min_history = seeds[0].mean_history;
  for (const auto& s : seeds) {
    min_samples = std::min(min_samples, s.samples);
    min_history = std::min(min_history, s.mean_history);
  }
  const bool setup = min_samples >= 45000 && min_history > 60.0 && rc.generator.duplication == 4.0 &&
                     rc.data.truncate_len == 20;
  const bool pass = setup && skv > din + 0.005 && edin > skv + 0.01 && mp >= edin - 0.002 && mp > skv + 0.01 &&
                    minutes < 15.0;
  report(6, pass, "ablation ordering on synthetic data (mean of 3 seeds)",
         fmt("DIN %.4f DINSKV %.4f EDIN %.4f DINTP %.4f DINMP %.4f; ", din, skv, edin, mean[ModelVariant::dintp], mp) +
             fmt("DINSKV-DIN %+.4f EDIN-DINSKV %+.4f DINMP-EDIN %+.4f DINMP-DINSKV %+.4f; ", skv - din, edin - skv,
                 mp - edin, mp - skv) +
             fmt("%zu+ samples, mean history %.1f events, %.1f min", min_samples, min_history, minutes));

  bool in_range = true;
  std::string ratios;
  for (const auto& s : seeds) {
    in_range &= s.compression >= 3.6 && s.compression <= 4.4;
    ratios += fmt(" %.3f", s.compression);
  }
  report(7, in_range, "avg #behavior / avg #key with duplication 4", "per seed" + ratios);

  int recent_wins = 0;
  std::string factors;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    recent_wins += seeds[i].recent_over_oldest;
    factors += fmt(" seed %zu: %.4g vs %.4g;", i + 1, seeds[i].recent, seeds[i].oldest);
  }
  report(8, recent_wins >= 2, "DINMP most recent time factor exceeds the oldest",
         fmt("%d/3 seeds;", recent_wins) + factors);
}

// --- 9 ---------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

int run(const std::string& cmd) { return std::system((cmd + " > /dev/null").c_str()); }

void deterministic_training(const std::string& cli) {
  const fs::path dir = fs::temp_directory_path() / "dinmp_acceptance_train";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "config.json") << R"({
  "seed": 17,
  "variant": "DINMP",
  "model": {"embedding_dim": 4, "attention_hidden": 8, "mlp_layers": [16, 8]},
  "train": {"lr": 0.003, "epochs": 2, "batch_size": 64},
  "generator": {"num_users": 150, "num_keys": 300, "num_categories": 10}
})";
  const std::string q = "'" + cli + "'", cfg = " --config '" + (dir / "config.json").string() + "'";
  const fs::path data = dir / "data", batch = dir / "train.kvb";
  bool ok = run(q + " generate" + cfg + " --out '" + data.string() + "'") == 0 &&
            run(q + " convert" + cfg + " --events '" + (data / kEventsFile).string() + "' --samples '" +
                (data / kTrainSamplesFile).string() + "' --out '" + batch.string() + "'") == 0;
  for (const char* name : {"a.json", "b.json"}) {
    ok = ok && run(q + " train" + cfg + " --data '" + batch.string() + "' --out '" + (dir / name).string() + "'") == 0;
  }
  std::string detail = "command failed";
  bool same = false;
  if (ok) {
    const std::string a = slurp(dir / "a.json"), b = slurp(dir / "b.json");
    same = !a.empty() && a == b;
    detail = fmt("%zu-byte checkpoints %s", a.size(), same ? "identical" : "differ");
  }
  fs::remove_all(dir);
  report(9, ok && same, "same config and seed give bit-identical checkpoints", detail);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string config = std::string(DINMP_SOURCE_DIR) + "/configs/synthetic.json";
  std::string cli = DINMP_CLI_PATH;
  std::vector<int> only;
  app.add_option("--config", config, "Config for the synthetic ablation")->check(CLI::ExistingFile);
  app.add_option("--cli", cli, "dinmp executable");
  app.add_option("--only", only, "Criteria to run")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::set<int> selected(only.begin(), only.end());
  auto want = [&](int id) { return selected.empty() || selected.count(id); };
  try {
    if (want(1)) sparse_equals_dense();
    if (want(2)) gradient_checks();
    if (want(3)) partition_conservation();
    if (want(4)) auc_oracle();
    if (want(5)) rela_impr_tables();
    if (want(6) || want(7) || want(8)) synthetic_ablation(load_run_config(config));
    if (want(9)) deterministic_training(cli);
  } catch (const std::exception& e) {
    std::cout << "FAIL  aborted: " << e.what() << std::endl;
    return 1;
  }
  return failures ? 1 : 0;
}
