// Copyright 2026 The tommer Authors
// SPDX-License-Identifier: Apache-2.0

// Entity typing on top of detected mentions.
//
// A span (s, e) is embedded as concat(z_s, z_e) and classified by a two-layer
// perceptron
//
//   p = softmax(W2 relu(W1 x + b1) + b2)
//
// over K entity types plus a trailing "NONE" class that absorbs spans the
// detector proposed but the gold data does not contain.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tommer/metrics.hpp"
#include "tommer/probe.hpp"
#include "tommer/repio.hpp"

namespace tommer {

inline constexpr std::size_t kDefaultNerHidden = 1024;
inline constexpr std::string_view kNoneLabel = "NONE";

struct NerHeadParams {
  Matrix w1;               // hidden x input_dim
  std::vector<double> b1;  // hidden
  Matrix w2;               // classes x hidden
  std::vector<double> b2;  // classes
  /// K entity types followed by "NONE".
  std::vector<std::string> label_names;

  std::size_t input_dim() const noexcept { return w1.cols; }
  std::size_t hidden() const noexcept { return w1.rows; }
  std::size_t num_classes() const noexcept { return label_names.size(); }
  std::size_t none_index() const noexcept { return label_names.size() - 1; }
  /// Throws std::invalid_argument for names outside label_names.
  std::size_t label_index(std::string_view name) const;
};

std::vector<std::span<double>> parameter_blobs(NerHeadParams& params);
std::vector<std::span<const double>> parameter_blobs(const NerHeadParams& params);

/// Uniform +-1/sqrt(fan_in) weights and biases. `types` must be non-empty and
/// must not contain "NONE".
NerHeadParams init_ner_head(std::size_t input_dim, const std::vector<std::string>& types, std::size_t hidden,
                            std::uint64_t seed);

/// concat(z_s, z_e), 1-based span over an n x d tensor.
std::vector<double> span_embedding(const TensorF32& reps, const Span& span);

struct SpanClassification {
  std::vector<double> probs;
  std::size_t label = 0;  // argmax, lowest index on ties
};

SpanClassification classify_span(std::span<const double> embedding, const NerHeadParams& params);

struct NerExample {
  std::vector<double> embedding;
  std::size_t label = 0;
};

struct NerLossGradients {
  double loss = 0.0;  // mean cross-entropy
  NerHeadParams gradients;
};

NerLossGradients ner_loss_gradients(const NerHeadParams& params, std::span<const NerExample> batch);

enum class MentionSource { gold, predictions };

std::string_view to_string(MentionSource source) noexcept;
MentionSource parse_mention_source(std::string_view name);

struct NerTrainConfig {
  std::size_t hidden = kDefaultNerHidden;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
};

/// Sorted distinct entity types of a typed dataset.
std::vector<std::string> collect_types(const std::vector<AnnotatedSequence>& dataset);

/// Training examples from a typed dataset with embeddings read through
/// `source` (already pointed at the embedding layer). With MentionSource::gold
/// every gold mention is an example; with predictions, `predicted` supplies the
/// spans and those missing from gold are labeled NONE. Unknown types throw.
std::vector<NerExample> build_ner_examples(const std::vector<AnnotatedSequence>& dataset, const RepSource& source,
                                           MentionSource mention_source, const SpanSets* predicted,
                                           const NerHeadParams& label_space);

NerHeadParams train_ner_head(const std::vector<NerExample>& examples, const std::vector<std::string>& types,
                             std::size_t input_dim, const NerTrainConfig& config);

/// Typed spans keyed by seq_id.
using TypedSpanSets = std::map<std::string, std::map<Span, std::string>>;

/// Micro P/R/F1 over exact (span, type) matches; NONE predictions are
/// dropped before scoring.
PRF ner_f1(const TypedSpanSets& pred, const TypedSpanSets& gold);

TypedSpanSets gold_types(const std::vector<AnnotatedSequence>& dataset);

/// Checkpoint kind "nerhead": blobs w1, b1, w2, b2; metadata carries
/// label_names, hidden, input_dim and the embedding layer.
Checkpoint ner_to_checkpoint(const NerHeadParams& params, int embedding_layer);
NerHeadParams ner_from_checkpoint(const Checkpoint& checkpoint, int* embedding_layer = nullptr);

}  // namespace tommer
