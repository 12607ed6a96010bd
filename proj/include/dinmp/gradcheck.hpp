// Copyright (C) 2026 The DINMP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "dinmp/params.hpp"

namespace dinmp {

struct GradCheckOptions {
  double step = 1e-5;
  std::size_t coords_per_param = 32;
  std::uint64_t seed = 7;
  int max_nudges = 3;
};

struct GradCheckReport {
  std::map<std::string, double> max_relative_error;
  std::map<std::string, std::size_t> coords_checked;
  std::size_t nudged = 0;

  double worst() const {
    double w = 0.0;
    for (const auto& [_, e] : max_relative_error) w = std::max(w, e);
    return w;
  }
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

/// Compares analytic gradients against central differences on a random
/// coordinate subset of every parameter.
///
/// `loss` evaluates the scalar objective from the current parameter values.
/// `compute_grads` must leave dloss/dparam in the store's gradient tensors.
/// A coordinate whose forward and backward difference quotients disagree sits
/// on a relu kink; it is nudged by a few steps and re-evaluated (analytic gradient
/// included) so non-differentiable points never enter the report.
inline GradCheckReport finite_diff_check(const std::function<double()>& loss,
                                         const std::function<void()>& compute_grads, ParameterStore& store,
                                         const GradCheckOptions& opt = {}) {
  GradCheckReport report;
  std::mt19937_64 rng(opt.seed);
  const double h = opt.step;

  // Slopes over the steps actually taken: x ± h is rarely representable.
  struct Slopes {
    double central, forward, backward;
  };
  auto slopes = [&](double& x, double step) {
    const double orig = x;
    const double center = loss();
    x = orig + step;
    const double hi = x;
    const double up = loss();
    x = orig - step;
    const double lo = x;
    const double down = loss();
    x = orig;
    return Slopes{(up - down) / (hi - lo), (up - center) / (hi - orig), (center - down) / (orig - lo)};
  };

  compute_grads();
  for (auto& [name, param] : store.entries()) {
    const std::size_t n = param.value.size();
    std::vector<std::size_t> coords;
    if (n <= opt.coords_per_param) {
      coords.resize(n);
      std::iota(coords.begin(), coords.end(), 0);
    } else {
      // Half the budget goes to coordinates that actually receive gradient,
      // since large embedding tables are mostly untouched by a small batch.
      std::vector<std::size_t> live, all(n);
      std::iota(all.begin(), all.end(), 0);
      for (std::size_t i = 0; i < n; ++i) {
        if (param.grad[i] != 0.0) live.push_back(i);
      }
      std::shuffle(live.begin(), live.end(), rng);
      std::shuffle(all.begin(), all.end(), rng);
      const std::size_t want_live = std::min(live.size(), opt.coords_per_param / 2);
      coords.assign(live.begin(), live.begin() + static_cast<std::ptrdiff_t>(want_live));
      for (std::size_t i = 0; coords.size() < opt.coords_per_param && i < n; ++i) {
        if (std::find(coords.begin(), coords.end(), all[i]) == coords.end()) coords.push_back(all[i]);
      }
    }

    double worst = 0.0;
    for (const std::size_t c : coords) {
      double& x = param.value[c];
      const double orig = x;
      double analytic = param.grad[c];
      Slopes s = slopes(x, h);
      bool moved = false;
      for (int attempt = 0; attempt < opt.max_nudges; ++attempt) {
        const double scale = std::max({std::abs(s.forward), std::abs(s.backward), 1e-6});
        if (std::abs(s.forward - s.backward) <= 1e-3 * scale) break;
        x += 7.0 * h;
        moved = true;
        ++report.nudged;
        compute_grads();
        analytic = param.grad[c];
        s = slopes(x, h);
      }
      const double numeric = s.central;
      worst = std::max(worst, relative_error(analytic, numeric));
      if (moved) {
        x = orig;
        compute_grads();
      }
    }
    report.max_relative_error[name] = worst;
    report.coords_checked[name] = coords.size();
  }
  return report;
}

}  // namespace dinmp
