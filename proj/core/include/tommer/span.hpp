// Copyright 2026 The tommer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <vector>

namespace tommer {

/// Default maximum span length, in tokens.
inline constexpr std::size_t kDefaultWindow = 25;

/// A contiguous token span, 1-based and inclusive on both ends.
///
/// Spans order canonically by end token, then by start token. This is the
/// order in which spans are enumerated, scored, labeled and serialized, and
/// it is also the iteration order of `std::set<Span>`.
struct Span {
  std::uint32_t start = 1;
  std::uint32_t end = 1;

  constexpr std::size_t length() const noexcept { return end - start + 1; }
  constexpr bool overlaps(const Span& o) const noexcept { return start <= o.end && o.start <= end; }

  constexpr std::strong_ordering operator<=>(const Span& o) const noexcept {
    if (auto c = end <=> o.end; c != 0) return c;
    return start <=> o.start;
  }
  constexpr bool operator==(const Span&) const noexcept = default;
};

/// Number of spans of length <= window in a sequence of n tokens.
constexpr std::size_t span_count(std::size_t n, std::size_t window) noexcept {
  if (n <= window) return n * (n + 1) / 2;
  return window * n - window * (window - 1) / 2;
}

/// Position of `span` in the canonical enumeration for (n, window).
/// The span must lie inside [1, n] and have length <= window.
std::size_t span_index(const Span& span, std::size_t n, std::size_t window);

/// All spans of length <= window, in canonical order.
std::vector<Span> enumerate_spans(std::size_t n, std::size_t window);

/// How many gold mentions made it into the labeled span set.
struct CoverageReport {
  std::size_t gold_total = 0;
  std::size_t gold_labeled = 0;
  /// Gold spans absent from the enumeration (longer than the window).
  std::size_t gold_dropped = 0;
};

struct SpanLabels {
  std::vector<Span> spans;
  std::vector<std::uint8_t> labels;
  CoverageReport coverage;
};

/// Binary labels over `spans`: 1 iff the span is exactly a gold mention.
SpanLabels label_spans(std::span<const Span> spans, const std::set<Span>& gold);

struct ClassCounts {
  std::size_t positive = 0;
  std::size_t negative = 0;
  std::size_t total() const noexcept { return positive + negative; }
};

ClassCounts class_counts(std::span<const std::uint8_t> labels) noexcept;

}  // namespace tommer
