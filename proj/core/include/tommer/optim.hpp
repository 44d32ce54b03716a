// Copyright 2026 The tommer Authors
// SPDX-License-Identifier: Apache-2.0

// AdamW with decoupled weight decay, and global-norm gradient clipping.
// Both work on flat views so any parameter set (probe, typing head) can use
// them.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace tommer {

struct AdamWConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct AdamWState {
  AdamWConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  AdamWState() = default;
  explicit AdamWState(AdamWConfig cfg) : config(cfg) {}
};

/// One update:
///   p <- p * (1 - lr * wd)
///   m <- b1 m + (1 - b1) g,   v <- b2 v + (1 - b2) g^2
///   p <- p - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
/// Moments are allocated on the first call; later calls must pass blobs of
/// the same sizes.
void adamw_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
                AdamWState& state);

double global_norm(std::span<const std::span<const double>> grads) noexcept;

/// Scales every gradient by max_norm / norm when the global L2 norm exceeds
/// max_norm. Returns the norm before clipping.
double clip_gradients(std::span<const std::span<double>> grads, double max_norm);

}  // namespace tommer
