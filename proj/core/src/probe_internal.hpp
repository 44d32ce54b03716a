// Copyright 2026 The tommer Authors
// SPDX-License-Identifier: Apache-2.0

// Shared between the forward pass (probe.cpp) and its gradients (loss.cpp).

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "tommer/probe.hpp"

namespace tommer::detail {

/// Row-normalized projections W x_t for every token t.
struct UnitProjection {
  Matrix unit;                        // n x r, rows of norm 1 (or all zero when degenerate)
  std::vector<double> norm;           // n
  std::vector<std::uint8_t> degenerate;  // norm < kNormFloor
};

/// `rows` holds n consecutive vectors of width weights.cols.
UnitProjection project_normalized(std::span<const float> rows, std::size_t n, const Matrix& weights);

/// Cosine of two unit projections; 0 when either side is degenerate.
inline double unit_cosine(const UnitProjection& q, std::size_t i, const UnitProjection& k, std::size_t j) {
  if (q.degenerate[i] || k.degenerate[j]) return 0.0;
  const auto a = q.unit.row(i);
  const auto b = k.unit.row(j);
  double s = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) s += a[c] * b[c];
  return s;
}

inline double log_sigmoid(double x) {
  return x < 0.0 ? x - std::log1p(std::exp(x)) : -std::log1p(std::exp(-x));
}

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// Sum over (layer, head) of weight * a[l][h][i][j], 0-based token indices.
double attention_logit(const TensorF32& attention, const LcattnParams& params, std::size_t i, std::size_t j);

/// Position of the max (or min) of m[k][j] over i < k <= j; returns i for
/// single-token spans, matching the empty-pool fallback.
std::size_t pool_argmax(const MatchMatrix& m, std::size_t i, std::size_t j);
std::size_t pool_argmin(const MatchMatrix& m, std::size_t i, std::size_t j);

}  // namespace tommer::detail
