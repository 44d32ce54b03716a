// Copyright 2026 The tommer Authors
// SPDX-License-Identifier: Apache-2.0

#include "synthetic.hpp"

#include <cmath>
#include <random>
#include <string>

namespace tommer::testing {

namespace {

std::vector<double> random_direction(std::size_t dim, double norm, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(dim);
  double sq = 0.0;
  for (double& x : v) {
    x = g(rng);
    sq += x * x;
  }
  for (double& x : v) x *= norm / std::sqrt(sq);
  return v;
}

}  // namespace

SyntheticCorpus make_synthetic_corpus(const SyntheticConfig& config) {
  std::mt19937_64 rng(config.seed);
  const std::size_t d = config.dim;
  const auto bias = random_direction(d, config.bias, rng);
  const auto inside = random_direction(d, config.signal, rng);
  const auto cont = random_direction(d, config.signal, rng);
  const auto end = random_direction(d, config.signal, rng);

  std::uniform_int_distribution<std::size_t> len_dist(config.min_tokens, config.max_tokens);
  std::uniform_int_distribution<std::size_t> mention_len(1, config.max_mention_len);
  std::bernoulli_distribution starts(config.mention_prob);
  std::normal_distribution<double> noise(0.0, config.noise);

  SyntheticCorpus corpus;
  corpus.source = std::make_shared<InMemoryRepSource>();
  for (std::size_t s = 0; s < config.sequences; ++s) {
    const std::size_t n = len_dist(rng);
    AnnotatedSequence seq;
    seq.seq_id = "syn-" + std::to_string(s);
    seq.n_tokens = n;
    seq.rep_file = seq.seq_id + ".tomr";

    // 0 = outside, 1 = mention start, 2 = continuation; ends tracked separately.
    std::vector<int> role(n + 1, 0);
    std::vector<char> is_end(n + 1, 0);
    std::size_t t = 1;
    while (t <= n) {
      // Keep at least one outside token between mentions.
      const bool can_start = t == 1 || role[t - 1] == 0;
      if (can_start && starts(rng)) {
        const std::size_t len = std::min(mention_len(rng), n - t + 1);
        for (std::size_t k = 0; k < len; ++k) role[t + k] = k == 0 ? 1 : 2;
        is_end[t + len - 1] = 1;
        seq.mentions.insert(Span{static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(t + len - 1)});
        t += len;
      } else {
        ++t;
      }
    }

    std::vector<float> data(n * d);
    for (std::size_t k = 1; k <= n; ++k) {
      for (std::size_t c = 0; c < d; ++c) {
        double x = bias[c] + noise(rng);
        if (role[k] != 0) x += inside[c];
        if (role[k] == 2) x += cont[c];
        if (is_end[k]) x += end[c];
        data[(k - 1) * d + c] = static_cast<float>(x);
      }
    }
    corpus.source->add(seq.seq_id, SequenceInputs{TensorF32({n, d}, std::move(data)), {}, {}, {}});
    corpus.dataset.push_back(std::move(seq));
  }
  return corpus;
}

std::vector<AnnotatedSequence> drop_labels(const std::vector<AnnotatedSequence>& dataset, double rate,
                                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution drop(rate);
  auto out = dataset;
  for (auto& seq : out) {
    std::set<Span> kept;
    for (const Span& s : seq.mentions) {
      if (!drop(rng)) kept.insert(s);
    }
    seq.mentions = std::move(kept);
    seq.mention_types.clear();
  }
  return out;
}

}  // namespace tommer::testing
