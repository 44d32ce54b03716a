// Copyright 2026 The tommer Authors
// SPDX-License-Identifier: Apache-2.0

#include "tommer/span.hpp"

#include <algorithm>
#include <stdexcept>

namespace tommer {

std::size_t span_index(const Span& span, std::size_t n, std::size_t window) {
  if (span.start < 1 || span.start > span.end || span.end > n || span.length() > window) {
    throw std::out_of_range("span outside the enumerated window");
  }
  const std::size_t j = span.end;
  // Spans ending before j: sum over e < j of min(e, window).
  std::size_t before = 0;
  if (j - 1 <= window) {
    before = (j - 1) * j / 2;
  } else {
    before = window * (window + 1) / 2 + (j - 1 - window) * window;
  }
  const std::size_t first_start = j > window ? j - window + 1 : 1;
  return before + (span.start - first_start);
}

std::vector<Span> enumerate_spans(std::size_t n, std::size_t window) {
  std::vector<Span> spans;
  if (window == 0) return spans;
  spans.reserve(span_count(n, window));
  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t first = j > window ? j - window + 1 : 1;
    for (std::size_t i = first; i <= j; ++i) {
      spans.push_back(Span{static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)});
    }
  }
  return spans;
}

SpanLabels label_spans(std::span<const Span> spans, const std::set<Span>& gold) {
  SpanLabels out;
  out.spans.assign(spans.begin(), spans.end());
  out.labels.resize(spans.size(), 0);
  for (std::size_t k = 0; k < spans.size(); ++k) {
    if (gold.contains(spans[k])) {
      out.labels[k] = 1;
      ++out.coverage.gold_labeled;
    }
  }
  out.coverage.gold_total = gold.size();
  out.coverage.gold_dropped = gold.size() - out.coverage.gold_labeled;
  return out;
}

ClassCounts class_counts(std::span<const std::uint8_t> labels) noexcept {
  ClassCounts c;
  for (std::uint8_t y : labels) {
    if (y != 0) {
      ++c.positive;
    } else {
      ++c.negative;
    }
  }
  return c;
}

}  // namespace tommer
