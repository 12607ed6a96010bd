// Copyright (C) 2026 The DINMP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace dinmp {

enum class TiePolicy {
  strict,      // a tied pair scores 0
  half_credit  // a tied pair scores 1/2 (the conventional ROC area)
};

/// Pairwise AUC: the fraction of (positive, negative) pairs ranked with the
/// positive strictly above the negative. O(n log n) via one sort.
inline double auc(std::span<const double> scores, std::span<const std::uint8_t> labels,
                  TiePolicy ties = TiePolicy::strict) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

  std::uint64_t positives = 0, negatives = 0;
  // Counted in half-pairs so both tie policies stay in exact integer arithmetic.
  std::uint64_t half_pairs = 0;
  std::uint64_t negatives_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t group_pos = 0, group_neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]] > 1) throw std::invalid_argument("auc: labels must be 0 or 1");
      (labels[order[j]] ? group_pos : group_neg) += 1;
      ++j;
    }
    half_pairs += 2 * group_pos * negatives_below;
    if (ties == TiePolicy::half_credit) half_pairs += group_pos * group_neg;
    negatives_below += group_neg;
    positives += group_pos;
    negatives += group_neg;
    i = j;
  }
  if (positives == 0 || negatives == 0) {
    throw std::invalid_argument("auc: need at least one positive and one negative sample");
  }
  return static_cast<double>(half_pairs) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

/// Relative improvement in percent of (AUC - 0.5) over a base model.
inline double rela_impr(double measured_auc, double base_auc) {
  if (base_auc == 0.5) throw std::invalid_argument("rela_impr: base AUC of 0.5 makes the ratio undefined");
  return ((measured_auc - 0.5) / (base_auc - 0.5) - 1.0) * 100.0;
}

/// Rounds to the two decimals used in reports.
inline double round2(double x) { return std::round(x * 100.0) / 100.0; }

constexpr double kProbabilityClip = 1e-12;

/// Mean binary cross-entropy with probabilities clipped to [1e-12, 1-1e-12].
inline double log_loss(std::span<const double> probabilities, std::span<const std::uint8_t> labels) {
  if (probabilities.size() != labels.size()) throw std::invalid_argument("log_loss: length mismatch");
  if (probabilities.empty()) throw std::invalid_argument("log_loss: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const double p = std::clamp(probabilities[i], kProbabilityClip, 1.0 - kProbabilityClip);
    total += labels[i] ? std::log(p) : std::log(1.0 - p);
  }
  return -total / static_cast<double>(probabilities.size());
}

}  // namespace dinmp
