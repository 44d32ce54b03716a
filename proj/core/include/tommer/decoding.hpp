// Copyright 2026 The tommer Authors
// SPDX-License-Identifier: Apache-2.0

// Span probabilities -> mention sets.
//
//   threshold  every span with p >= tau (nested and overlapping spans allowed)
//   greedy     highest p first, skipping spans that share a token with an
//              accepted one; ties go to the earlier start, then the shorter span

#pragma once

#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "tommer/probe.hpp"
#include "tommer/span.hpp"

namespace tommer {

inline constexpr double kDefaultTau = 0.5;

enum class DecodeMode { threshold, greedy };

std::string_view to_string(DecodeMode mode) noexcept;
DecodeMode parse_decode_mode(std::string_view name);

struct ScoredSpan {
  Span span;
  double prob = 0.0;

  friend bool operator==(const ScoredSpan&, const ScoredSpan&) = default;
};

/// Both decoders return spans in canonical order. tau must lie in (0, 1).
std::vector<ScoredSpan> threshold_decode(const SpanProbMatrix& probs, double tau);
std::vector<ScoredSpan> greedy_flat_decode(const SpanProbMatrix& probs, double tau);
std::vector<ScoredSpan> decode(const SpanProbMatrix& probs, double tau, DecodeMode mode);

std::set<Span> span_set(const std::vector<ScoredSpan>& spans);

struct Prediction {
  std::string seq_id;
  std::vector<ScoredSpan> spans;
  DecodeMode mode = DecodeMode::threshold;
  /// Entity type per span for typed predictions; empty otherwise.
  std::vector<std::string> types;
};

/// JSONL, one record per sequence:
///   {"seq_id": ..., "spans": [[s, e, p], ...], "mode": "threshold"|"greedy"}
/// Typed predictions carry [s, e, p, "TYPE"].
void write_predictions(const std::vector<Prediction>& predictions, std::ostream& out);
void write_predictions(const std::vector<Prediction>& predictions, const std::filesystem::path& path);
std::vector<Prediction> parse_predictions(std::istream& in);
std::vector<Prediction> read_predictions(const std::filesystem::path& path);

}  // namespace tommer
