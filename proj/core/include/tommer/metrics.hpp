// Copyright 2026 The tommer Authors
// SPDX-License-Identifier: Apache-2.0

// Exact-span precision/recall/F1, agreement between runs (Sorensen-Dice),
// and agreement between annotators (Cohen's kappa).

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tommer/span.hpp"

namespace tommer {

/// Ratios use 0/0 := 0.
struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  static PRF from_counts(std::size_t tp, std::size_t fp, std::size_t fn) noexcept;
};

double f1_score(double precision, double recall) noexcept;

/// Mention sets keyed by seq_id.
using SpanSets = std::map<std::string, std::set<Span>>;

/// Micro-averaged over sequences. Both maps must have the same keys.
PRF match_prf(const SpanSets& pred, const SpanSets& gold);

enum class AggregateMode { aggregated, averaged };

std::string_view to_string(AggregateMode mode) noexcept;
AggregateMode parse_aggregate_mode(std::string_view name);

/// aggregated: sums tp/fp/fn and recomputes the ratios.
/// averaged:   unweighted mean of per-dataset precision, recall and F1; the
///             counts are still summed.
PRF aggregate(std::span<const PRF> reports, AggregateMode mode);

/// 2|A n B| / (|A| + |B|), with dice(empty, empty) = 1.
template <typename T>
double dice(const std::set<T>& a, const std::set<T>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t common = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++common;
      ++ia;
      ++ib;
    }
  }
  return 2.0 * static_cast<double>(common) / static_cast<double>(a.size() + b.size());
}

struct DiceMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<double>> values;

  /// Header "run,<label>,..." then one row per run.
  std::string to_csv() const;
};

/// Pairwise dice over (seq_id, span) triples pooled across the corpus. Needs
/// at least two runs over the same seq_id set.
DiceMatrix dice_matrix(const std::vector<std::pair<std::string, SpanSets>>& runs);

/// kappa = (p_o - p_e) / (1 - p_e); when p_e = 1, kappa is 1 if p_o = 1 and 0
/// otherwise. Entries are treated as booleans.
double cohen_kappa(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

/// Fraction of true verdicts. Throws on an empty input.
double judged_precision(std::span<const std::uint8_t> verdicts);

/// One named benchmark in an evaluation report.
struct DatasetReport {
  std::string name;
  std::size_t sequences = 0;
  PRF prf;
};

/// {"datasets": [{name, sequences, precision, recall, f1, tp, fp, fn}...],
///  "aggregate": {mode, precision, recall, f1, tp, fp, fn}}
std::string report_json(const std::vector<DatasetReport>& datasets, AggregateMode mode);

}  // namespace tommer
