// Copyright 2026 The tommer Authors
// SPDX-License-Identifier: Apache-2.0

// Planted-mention corpora for end-to-end tests.
//
// Every token carries a shared bias direction plus isotropic noise. Tokens
// inside a mention add a common "inside" direction, tokens that continue a
// mention add a "continuation" direction, and the last token of each mention
// adds an "end" direction. Mentions are flat, 1 to max_mention_len tokens,
// separated by at least one outside token.

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "tommer/probe.hpp"
#include "tommer/repio.hpp"

namespace tommer::testing {

struct SyntheticConfig {
  std::size_t sequences = 500;
  std::size_t dim = 32;
  std::size_t min_tokens = 10;
  std::size_t max_tokens = 24;
  std::size_t max_mention_len = 4;
  double mention_prob = 0.25;  // chance that an outside token starts a mention
  double signal = 3.0;         // norm of each planted direction
  double bias = 2.0;           // norm of the shared bias direction
  double noise = 0.35;         // per-coordinate standard deviation
  std::uint64_t seed = 1;
};

struct SyntheticCorpus {
  std::vector<AnnotatedSequence> dataset;
  std::shared_ptr<InMemoryRepSource> source;
};

SyntheticCorpus make_synthetic_corpus(const SyntheticConfig& config);

/// Drops each gold mention independently with probability `rate`.
std::vector<AnnotatedSequence> drop_labels(const std::vector<AnnotatedSequence>& dataset, double rate,
                                           std::uint64_t seed);

}  // namespace tommer::testing
