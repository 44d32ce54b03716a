// Copyright 2026 The tommer Authors
// SPDX-License-Identifier: Apache-2.0

// Balanced binary cross-entropy over span labels and its analytic gradient
// through the whole probe.
//
//   alpha = Neg / Pos           (1 when the batch has no positives)
//   loss  = -(1/Tot) sum[ alpha y log p + (1 - y) log(1 - p) ]
//
// p is clamped to [kProbClamp, 1 - kProbClamp] before the logs; a clamped
// probability contributes no gradient.

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "tommer/probe.hpp"

namespace tommer {

inline constexpr double kProbClamp = 1e-7;

struct BbceTerms {
  std::size_t positives = 0;
  std::size_t negatives = 0;
  double alpha = 1.0;
  double positive_mass = 0.0;  // -alpha * sum_{y=1} log p
  double negative_mass = 0.0;  // -sum_{y=0} log(1 - p)

  std::size_t total() const noexcept { return positives + negatives; }
  double loss() const noexcept { return (positive_mass + negative_mass) / static_cast<double>(total()); }
};

/// Class weight for a batch with the given counts.
double balance_alpha(std::size_t positives, std::size_t negatives) noexcept;

/// Throws std::invalid_argument on an empty batch or mismatched lengths.
BbceTerms bbce_terms(std::span<const double> probs, std::span<const std::uint8_t> labels);
double bbce_loss(std::span<const double> probs, std::span<const std::uint8_t> labels);

/// One sequence with its span labels in canonical order.
struct TrainingExample {
  std::shared_ptr<const SequenceInputs> inputs;
  std::vector<std::uint8_t> labels;
};

struct LossGradients {
  BbceTerms terms;
  ProbeParams gradients;
  double loss() const noexcept { return terms.loss(); }
};

/// Loss over the concatenation of every example's spans, with alpha and Tot
/// taken over the whole batch.
BbceTerms batch_loss(const ProbeParams& params, std::span<const TrainingExample> batch, std::size_t window);

/// Loss and exact gradient with respect to every parameter in `params`.
LossGradients loss_gradients(const ProbeParams& params, std::span<const TrainingExample> batch, std::size_t window);

}  // namespace tommer
