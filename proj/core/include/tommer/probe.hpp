// Copyright 2026 The tommer Authors
// SPDX-License-Identifier: Apache-2.0

// Span scoring from frozen token representations.
//
// A span (i, j) is scored from a matching matrix m (how strongly the start
// token i binds to the end token j) and a scalar value v per token:
//
//   features(i, j) = ( m[i][j],
//                      max_{i<k<=j} m[k][j],
//                      min_{i<k<=j} m[k][j],
//                      v[j],
//                      v[j+1] )
//   p(i, j)        = sigmoid(theta . features(i, j))
//
// Three matching variants are provided:
//   tom     cosine(W_Q z_i, W_K z_j) over residual representations z
//   ltqk    mean over heads of cosine(W_Q^h q_i^h, W_K^h k_j^h) over the
//           backbone's own per-head queries and keys
//   lcattn  log sigmoid(sum_{l,h} w[l][h] a[l][h][i][j]) over pre-softmax
//           attention dot products
//
// Computation is carried out in double precision. Parameters that come out
// of a checkpoint are f32-representable, so re-scoring a loaded checkpoint
// is bit-exact.

#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "tommer/repio.hpp"
#include "tommer/span.hpp"
#include "tommer/tensor.hpp"

namespace tommer {

inline constexpr std::size_t kNumFeatures = 5;
using SpanFeatures = std::array<double, kNumFeatures>;
using Theta = std::array<double, kNumFeatures>;

/// Norm floor below which a projected vector has no direction; the cosine of
/// any pair involving it is defined as 0.
inline constexpr double kNormFloor = 1e-12;
/// Logits are clamped to +-kLogitClamp before the sigmoid.
inline constexpr double kLogitClamp = 30.0;

/// Row-major dense matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return std::span<const double>(data).subspan(r * cols, cols); }
  std::span<double> row(std::size_t r) { return std::span<double>(data).subspan(r * cols, cols); }
};

enum class ProbeKind { tom, ltqk, lcattn };

std::string_view to_string(ProbeKind kind) noexcept;
ProbeKind parse_probe_kind(std::string_view name);

struct TomParams {
  Matrix query;               // r x d
  Matrix key;                 // r x d
  std::vector<double> value;  // d
  Theta theta{};
};

struct LtqkParams {
  std::vector<Matrix> query;  // per head, r x d_h
  std::vector<Matrix> key;    // per head, r x d_h
  std::vector<double> value;  // d, over the residual representation
  Theta theta{};
};

struct LcattnParams {
  std::size_t num_layers = 0;   // layers 0..L, i.e. L + 1
  std::size_t num_heads = 0;
  std::vector<double> weights;  // num_layers x num_heads, row-major
  std::vector<double> value;    // d
  Theta theta{};
};

using ProbeParams = std::variant<TomParams, LtqkParams, LcattnParams>;

ProbeKind kind_of(const ProbeParams& params) noexcept;
std::size_t model_dim(const ProbeParams& params) noexcept;
std::size_t parameter_count(const ProbeParams& params) noexcept;

/// Flat views over every trainable array, in checkpoint blob order.
std::vector<std::span<double>> parameter_blobs(ProbeParams& params);
std::vector<std::span<const double>> parameter_blobs(const ProbeParams& params);
std::vector<std::string> parameter_names(const ProbeParams& params);

/// Same layout as `params`, all zeros. Used for gradient accumulators.
ProbeParams zeros_like(const ProbeParams& params);

/// Everything the probe reads for one sequence.
struct SequenceInputs {
  TensorF32 reps;                            // n x d residual representations
  std::optional<TensorF32> head_queries;     // N_h x n x d_h   (ltqk)
  std::optional<TensorF32> head_keys;        // N_h x n x d_h   (ltqk)
  std::optional<TensorF32> attention;        // (L+1) x N_h x n x n pre-softmax dots (lcattn)

  std::size_t n_tokens() const { return reps.dim(0); }
};

/// Checks that `inputs` carries what `params` needs, with consistent shapes.
void validate_inputs(const ProbeParams& params, const SequenceInputs& inputs);

/// Banded matching matrix: entries m[i][j] for 1 <= i <= j <= n, j - i < window.
class MatchMatrix {
 public:
  MatchMatrix(std::size_t n, std::size_t window);

  std::size_t n() const noexcept { return n_; }
  std::size_t window() const noexcept { return window_; }

  /// 1-based start i and end j.
  double operator()(std::size_t i, std::size_t j) const { return values_[slot(i, j)]; }
  double& at(std::size_t i, std::size_t j) { return values_[slot(i, j)]; }

  /// Pairs whose cosine was forced to 0 because a projection had no norm.
  std::size_t degenerate_pairs = 0;

 private:
  std::size_t slot(std::size_t i, std::size_t j) const;

  std::size_t n_;
  std::size_t window_;
  std::vector<double> values_;
};

/// Scalar value per token, 1-based, with the boundary value v[n+1] = 0.
class TokenValues {
 public:
  explicit TokenValues(std::vector<double> values) : values_(std::move(values)) {}

  std::size_t n() const noexcept { return values_.size(); }
  double operator()(std::size_t j) const { return j == values_.size() + 1 ? 0.0 : values_.at(j - 1); }

 private:
  std::vector<double> values_;
};

/// Probability for every span of one sequence, in canonical span order.
struct SpanProbMatrix {
  std::size_t n = 0;
  std::size_t window = kDefaultWindow;
  std::vector<double> probs;

  double operator()(const Span& span) const { return probs[span_index(span, n, window)]; }
  std::vector<Span> spans() const { return enumerate_spans(n, window); }
};

MatchMatrix tom_match(const TensorF32& reps, const TomParams& params, std::size_t window);
MatchMatrix ltqk_match(const TensorF32& head_queries, const TensorF32& head_keys, const LtqkParams& params,
                       std::size_t window);
MatchMatrix lcattn_match(const TensorF32& attention, const LcattnParams& params, std::size_t window);
MatchMatrix match_scores(const ProbeParams& params, const SequenceInputs& inputs, std::size_t window);

TokenValues value_probe(const TensorF32& reps, std::span<const double> value_weights);

SpanFeatures assemble_features(const MatchMatrix& m, const TokenValues& v, const Span& span);

/// theta . features clamped to +-kLogitClamp.
double span_logit(const SpanFeatures& features, const Theta& theta) noexcept;
double span_probability(const SpanFeatures& features, const Theta& theta) noexcept;

const Theta& theta_of(const ProbeParams& params) noexcept;
std::span<const double> value_weights_of(const ProbeParams& params) noexcept;

SpanProbMatrix score_all_spans(const ProbeParams& params, const SequenceInputs& inputs, std::size_t window);

// ---------------------------------------------------------------------------
// Model = parameters + the metadata that travels with them in a checkpoint
// ---------------------------------------------------------------------------

struct ProbeModel {
  ProbeParams params;
  std::size_t window = kDefaultWindow;
  int layer = 0;
  std::string backbone;
  std::map<std::string, double> hyperparameters;

  ProbeKind kind() const noexcept { return kind_of(params); }
  SpanProbMatrix score(const SequenceInputs& inputs) const { return score_all_spans(params, inputs, window); }
};

/// Rounds every parameter to the nearest f32, the precision checkpoints hold.
void round_to_f32(ProbeParams& params);

Checkpoint to_checkpoint(const ProbeModel& model);
ProbeModel probe_from_checkpoint(const Checkpoint& checkpoint);

// ---------------------------------------------------------------------------
// Where per-sequence inputs come from
// ---------------------------------------------------------------------------

class RepSource {
 public:
  virtual ~RepSource() = default;
  virtual std::shared_ptr<const SequenceInputs> load(const AnnotatedSequence& seq, ProbeKind kind) const = 0;
};

/// Reads TOMR files below a directory. The dataset's rep_file names the n x d
/// residual tensor; a `{layer}` placeholder in it is replaced by `layer`.
/// ltqk reads `<stem>.q.tomr` / `<stem>.k.tomr` next to it, lcattn reads
/// `<stem>.attn.tomr`.
class DirectoryRepSource final : public RepSource {
 public:
  DirectoryRepSource(std::filesystem::path root, int layer) : root_(std::move(root)), layer_(layer) {}

  std::shared_ptr<const SequenceInputs> load(const AnnotatedSequence& seq, ProbeKind kind) const override;

  std::filesystem::path resolve(const std::string& rep_file) const;

 private:
  std::filesystem::path root_;
  int layer_;
};

/// Inputs keyed by seq_id, held in memory.
class InMemoryRepSource final : public RepSource {
 public:
  void add(std::string seq_id, SequenceInputs inputs);
  std::shared_ptr<const SequenceInputs> load(const AnnotatedSequence& seq, ProbeKind kind) const override;

 private:
  std::map<std::string, std::shared_ptr<const SequenceInputs>> inputs_;
};

/// Path of a companion tensor: "dir/a.tomr" + ".q" -> "dir/a.q.tomr".
std::filesystem::path companion_path(const std::filesystem::path& rep_path, std::string_view suffix);

}  // namespace tommer
