// Copyright 2026 The tommer Authors
// SPDX-License-Identifier: Apache-2.0

#include "tommer/nerhead.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"
#include "random_internal.hpp"
#include "tommer/error.hpp"
#include "tommer/optim.hpp"

namespace tommer {

using json = nlohmann::json;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMatrix = Eigen::Map<RowMatrix>;
using ConstMapMatrix = Eigen::Map<const RowMatrix>;
using ConstMapVector = Eigen::Map<const Eigen::VectorXd>;

ConstMapMatrix view(const Matrix& m) { return ConstMapMatrix(m.data.data(), m.rows, m.cols); }
MapMatrix view(Matrix& m) { return MapMatrix(m.data.data(), m.rows, m.cols); }

void fill_uniform(std::span<double> values, std::size_t fan_in, detail::Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& x : values) x = rng.uniform(-bound, bound);
}

// Row-wise softmax, stabilized by the row max.
void softmax_rows(RowMatrix& logits) {
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
}

}  // namespace

std::size_t NerHeadParams::label_index(std::string_view name) const {
  for (std::size_t k = 0; k < label_names.size(); ++k) {
    if (label_names[k] == name) return k;
  }
  throw std::invalid_argument("unknown entity type '" + std::string(name) + "'");
}

std::vector<std::span<double>> parameter_blobs(NerHeadParams& p) { return {p.w1.data, p.b1, p.w2.data, p.b2}; }

std::vector<std::span<const double>> parameter_blobs(const NerHeadParams& p) {
  return {p.w1.data, p.b1, p.w2.data, p.b2};
}

NerHeadParams init_ner_head(std::size_t input_dim, const std::vector<std::string>& types, std::size_t hidden,
                            std::uint64_t seed) {
  if (types.empty()) throw std::invalid_argument("ner head needs at least one entity type");
  if (input_dim == 0 || hidden == 0) throw std::invalid_argument("ner head dimensions must be positive");
  if (std::find(types.begin(), types.end(), kNoneLabel) != types.end()) {
    throw std::invalid_argument("entity type NONE is reserved");
  }
  NerHeadParams p;
  p.label_names = types;
  p.label_names.emplace_back(kNoneLabel);
  const std::size_t k = p.label_names.size();
  p.w1 = Matrix(hidden, input_dim);
  p.b1.assign(hidden, 0.0);
  p.w2 = Matrix(k, hidden);
  p.b2.assign(k, 0.0);
  detail::Rng rng(seed);
  fill_uniform(p.w1.data, input_dim, rng);
  fill_uniform(p.b1, input_dim, rng);
  fill_uniform(p.w2.data, hidden, rng);
  fill_uniform(p.b2, hidden, rng);
  return p;
}

std::vector<double> span_embedding(const TensorF32& reps, const Span& span) {
  if (reps.rank() != 2) throw ShapeError("span_embedding: representations must be n x d");
  const std::size_t n = reps.dim(0);
  const std::size_t d = reps.dim(1);
  if (span.start < 1 || span.start > span.end || span.end > n) throw std::out_of_range("span_embedding: span out of range");
  std::vector<double> x(2 * d);
  const auto data = reps.data();
  for (std::size_t c = 0; c < d; ++c) {
    x[c] = data[(span.start - 1) * d + c];
    x[d + c] = data[(span.end - 1) * d + c];
  }
  return x;
}

SpanClassification classify_span(std::span<const double> embedding, const NerHeadParams& params) {
  if (embedding.size() != params.input_dim()) throw ShapeError("classify_span: embedding size differs from the head");
  const ConstMapVector x(embedding.data(), static_cast<Eigen::Index>(embedding.size()));
  const Eigen::VectorXd h =
      (view(params.w1) * x + ConstMapVector(params.b1.data(), params.b1.size())).cwiseMax(0.0);
  RowMatrix logits = (view(params.w2) * h + ConstMapVector(params.b2.data(), params.b2.size())).transpose();
  softmax_rows(logits);
  SpanClassification out;
  out.probs.assign(logits.data(), logits.data() + logits.size());
  out.label = static_cast<std::size_t>(std::max_element(out.probs.begin(), out.probs.end()) - out.probs.begin());
  return out;
}

NerLossGradients ner_loss_gradients(const NerHeadParams& params, std::span<const NerExample> batch) {
  if (batch.empty()) throw std::invalid_argument("ner loss: empty batch");
  const auto b = static_cast<Eigen::Index>(batch.size());
  const auto in = static_cast<Eigen::Index>(params.input_dim());
  const auto k = static_cast<Eigen::Index>(params.num_classes());

  RowMatrix x(b, in);
  for (Eigen::Index r = 0; r < b; ++r) {
    const auto& ex = batch[static_cast<std::size_t>(r)];
    if (ex.embedding.size() != params.input_dim()) throw ShapeError("ner loss: embedding size differs from the head");
    if (ex.label >= params.num_classes()) throw std::invalid_argument("ner loss: label index out of range");
    x.row(r) = ConstMapVector(ex.embedding.data(), in).transpose();
  }
  const ConstMapVector b1(params.b1.data(), params.b1.size());
  const ConstMapVector b2(params.b2.data(), params.b2.size());
  const RowMatrix z = (x * view(params.w1).transpose()).rowwise() + b1.transpose();
  const RowMatrix h = z.cwiseMax(0.0);
  RowMatrix p = (h * view(params.w2).transpose()).rowwise() + b2.transpose();
  softmax_rows(p);

  NerLossGradients out;
  out.gradients = params;
  for (auto blob : parameter_blobs(out.gradients)) std::fill(blob.begin(), blob.end(), 0.0);

  RowMatrix dlogits = p;
  double loss = 0.0;
  for (Eigen::Index r = 0; r < b; ++r) {
    const auto y = static_cast<Eigen::Index>(batch[static_cast<std::size_t>(r)].label);
    loss -= std::log(std::max(p(r, y), 1e-300));
    dlogits(r, y) -= 1.0;
  }
  dlogits /= static_cast<double>(b);
  out.loss = loss / static_cast<double>(b);

  auto& g = out.gradients;
  view(g.w2) = dlogits.transpose() * h;
  Eigen::Map<Eigen::VectorXd>(g.b2.data(), k) = dlogits.colwise().sum().transpose();
  RowMatrix dz = dlogits * view(params.w2);
  dz = dz.cwiseProduct((z.array() > 0.0).cast<double>().matrix());
  view(g.w1) = dz.transpose() * x;
  Eigen::Map<Eigen::VectorXd>(g.b1.data(), g.b1.size()) = dz.colwise().sum().transpose();
  return out;
}

std::string_view to_string(MentionSource source) noexcept {
  return source == MentionSource::gold ? "gold" : "predictions";
}

MentionSource parse_mention_source(std::string_view name) {
  if (name == "gold") return MentionSource::gold;
  if (name == "predictions") return MentionSource::predictions;
  throw std::invalid_argument("unknown mention source '" + std::string(name) + "' (expected gold or predictions)");
}

std::vector<std::string> collect_types(const std::vector<AnnotatedSequence>& dataset) {
  std::set<std::string> types;
  for (const auto& seq : dataset) {
    for (const auto& [span, type] : seq.mention_types) types.insert(type);
  }
  return {types.begin(), types.end()};
}

std::vector<NerExample> build_ner_examples(const std::vector<AnnotatedSequence>& dataset, const RepSource& source,
                                           MentionSource mention_source, const SpanSets* predicted,
                                           const NerHeadParams& label_space) {
  if (mention_source == MentionSource::predictions && predicted == nullptr) {
    throw std::invalid_argument("predicted mention source needs predictions");
  }
  std::vector<NerExample> out;
  for (const auto& seq : dataset) {
    if (!seq.mentions.empty() && !seq.typed()) {
      throw std::invalid_argument("sequence " + seq.seq_id + " has untyped mentions");
    }
    const std::set<Span>* spans = &seq.mentions;
    if (mention_source == MentionSource::predictions) {
      auto it = predicted->find(seq.seq_id);
      if (it == predicted->end()) continue;
      spans = &it->second;
    }
    if (spans->empty()) continue;
    const auto inputs = source.load(seq, ProbeKind::tom);
    for (const Span& s : *spans) {
      auto type = seq.mention_types.find(s);
      const std::size_t label =
          type == seq.mention_types.end() ? label_space.none_index() : label_space.label_index(type->second);
      out.push_back({span_embedding(inputs->reps, s), label});
    }
  }
  return out;
}

NerHeadParams train_ner_head(const std::vector<NerExample>& examples, const std::vector<std::string>& types,
                             std::size_t input_dim, const NerTrainConfig& config) {
  if (config.batch_size == 0) throw std::invalid_argument("ner batch_size must be >= 1");
  auto params = init_ner_head(input_dim, types, config.hidden, config.seed);
  if (examples.empty()) return params;
  AdamWState opt(AdamWConfig{config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
  auto rng = detail::derived_rng(config.seed, 1);
  std::vector<std::size_t> perm(examples.size());
  for (std::size_t k = 0; k < perm.size(); ++k) perm[k] = k;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(perm);
    for (std::size_t start = 0; start < perm.size(); start += config.batch_size) {
      std::vector<NerExample> batch;
      for (std::size_t k = start; k < std::min(perm.size(), start + config.batch_size); ++k) {
        batch.push_back(examples[perm[k]]);
      }
      const auto lg = ner_loss_gradients(params, batch);
      adamw_step(parameter_blobs(params), parameter_blobs(lg.gradients), opt);
    }
  }
  // Checkpoints hold f32; keep the in-memory head identical to a reloaded one.
  for (auto blob : parameter_blobs(params)) {
    for (double& x : blob) x = static_cast<double>(static_cast<float>(x));
  }
  return params;
}

PRF ner_f1(const TypedSpanSets& pred, const TypedSpanSets& gold) {
  std::size_t tp = 0, fp = 0, fn = 0;
  static const std::map<Span, std::string> kEmpty;
  std::set<std::string> keys;
  for (const auto& [k, v] : pred) keys.insert(k);
  for (const auto& [k, v] : gold) keys.insert(k);
  for (const auto& key : keys) {
    const auto ip = pred.find(key);
    const auto ig = gold.find(key);
    const auto& p = ip == pred.end() ? kEmpty : ip->second;
    const auto& g = ig == gold.end() ? kEmpty : ig->second;
    std::size_t kept = 0, common = 0;
    for (const auto& [span, type] : p) {
      if (type == kNoneLabel) continue;
      ++kept;
      auto it = g.find(span);
      if (it != g.end() && it->second == type) ++common;
    }
    tp += common;
    fp += kept - common;
    fn += g.size() - common;
  }
  return PRF::from_counts(tp, fp, fn);
}

TypedSpanSets gold_types(const std::vector<AnnotatedSequence>& dataset) {
  TypedSpanSets out;
  for (const auto& seq : dataset) out[seq.seq_id] = seq.mention_types;
  return out;
}

Checkpoint ner_to_checkpoint(const NerHeadParams& params, int embedding_layer) {
  json meta;
  meta["label_names"] = params.label_names;
  meta["hidden"] = params.hidden();
  meta["input_dim"] = params.input_dim();
  meta["embedding_layer"] = embedding_layer;
  auto floats = [](std::span<const double> v) { return std::vector<float>(v.begin(), v.end()); };
  Checkpoint ckpt;
  ckpt.kind = "nerhead";
  ckpt.metadata = meta.dump();
  ckpt.blobs.push_back({"w1", {params.w1.rows, params.w1.cols}, floats(params.w1.data)});
  ckpt.blobs.push_back({"b1", {params.b1.size()}, floats(params.b1)});
  ckpt.blobs.push_back({"w2", {params.w2.rows, params.w2.cols}, floats(params.w2.data)});
  ckpt.blobs.push_back({"b2", {params.b2.size()}, floats(params.b2)});
  return ckpt;
}

NerHeadParams ner_from_checkpoint(const Checkpoint& ckpt, int* embedding_layer) {
  if (ckpt.kind != "nerhead") throw FormatError("expected a nerhead checkpoint, found " + ckpt.kind);
  NerHeadParams p;
  std::size_t hidden = 0, input_dim = 0;
  try {
    const json meta = json::parse(ckpt.metadata);
    p.label_names = meta.at("label_names").get<std::vector<std::string>>();
    hidden = meta.at("hidden").get<std::size_t>();
    input_dim = meta.at("input_dim").get<std::size_t>();
    if (embedding_layer) *embedding_layer = meta.value("embedding_layer", 0);
  } catch (const json::exception& e) {
    throw FormatError(std::string("nerhead metadata: ") + e.what());
  }
  const std::size_t k = p.label_names.size();
  if (k < 2 || p.label_names.back() != kNoneLabel) throw FormatError("nerhead label_names must end with NONE");
  auto expect = [&](const char* name, std::vector<std::size_t> shape) -> const CheckpointBlob& {
    const auto& b = ckpt.blob(name);
    if (b.shape != shape) throw FormatError(std::string("manifest/blob mismatch: nerhead blob ") + name);
    return b;
  };
  const auto& w1 = expect("w1", {hidden, input_dim});
  const auto& b1 = expect("b1", {hidden});
  const auto& w2 = expect("w2", {k, hidden});
  const auto& b2 = expect("b2", {k});
  p.w1 = Matrix(hidden, input_dim);
  std::copy(w1.data.begin(), w1.data.end(), p.w1.data.begin());
  p.b1.assign(b1.data.begin(), b1.data.end());
  p.w2 = Matrix(k, hidden);
  std::copy(w2.data.begin(), w2.data.end(), p.w2.data.begin());
  p.b2.assign(b2.data.begin(), b2.data.end());
  return p;
}

}  // namespace tommer
