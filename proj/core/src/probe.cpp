// Copyright 2026 The tommer Authors
// SPDX-License-Identifier: Apache-2.0

#include "tommer/probe.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"
#include "probe_internal.hpp"
#include "tommer/error.hpp"

namespace tommer {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Kinds and parameter bookkeeping
// ---------------------------------------------------------------------------

std::string_view to_string(ProbeKind kind) noexcept {
  switch (kind) {
    case ProbeKind::tom:
      return "tom";
    case ProbeKind::ltqk:
      return "ltqk";
    case ProbeKind::lcattn:
      return "lcattn";
  }
  return "tom";
}

ProbeKind parse_probe_kind(std::string_view name) {
  if (name == "tom") return ProbeKind::tom;
  if (name == "ltqk") return ProbeKind::ltqk;
  if (name == "lcattn") return ProbeKind::lcattn;
  throw std::invalid_argument("unknown probe variant '" + std::string(name) + "' (expected tom, ltqk or lcattn)");
}

ProbeKind kind_of(const ProbeParams& params) noexcept { return static_cast<ProbeKind>(params.index()); }

std::size_t model_dim(const ProbeParams& params) noexcept {
  return std::visit([](const auto& p) { return p.value.size(); }, params);
}

std::vector<std::span<double>> parameter_blobs(ProbeParams& params) {
  std::vector<std::span<double>> out;
  std::visit(
      [&out](auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, TomParams>) {
          out.emplace_back(p.query.data);
          out.emplace_back(p.key.data);
        } else if constexpr (std::is_same_v<T, LtqkParams>) {
          for (auto& m : p.query) out.emplace_back(m.data);
          for (auto& m : p.key) out.emplace_back(m.data);
        } else {
          out.emplace_back(p.weights);
        }
        out.emplace_back(p.value);
        out.emplace_back(p.theta);
      },
      params);
  return out;
}

std::vector<std::span<const double>> parameter_blobs(const ProbeParams& params) {
  auto mutable_view = parameter_blobs(const_cast<ProbeParams&>(params));
  return {mutable_view.begin(), mutable_view.end()};
}

std::vector<std::string> parameter_names(const ProbeParams& params) {
  std::vector<std::string> names;
  std::visit(
      [&names](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, TomParams>) {
          names = {"query", "key"};
        } else if constexpr (std::is_same_v<T, LtqkParams>) {
          for (std::size_t h = 0; h < p.query.size(); ++h) names.push_back("query/" + std::to_string(h));
          for (std::size_t h = 0; h < p.key.size(); ++h) names.push_back("key/" + std::to_string(h));
        } else {
          names = {"weights"};
        }
        names.emplace_back("value");
        names.emplace_back("theta");
      },
      params);
  return names;
}

std::size_t parameter_count(const ProbeParams& params) noexcept {
  std::size_t n = 0;
  for (auto blob : parameter_blobs(params)) n += blob.size();
  return n;
}

ProbeParams zeros_like(const ProbeParams& params) {
  ProbeParams out = params;
  for (auto blob : parameter_blobs(out)) std::fill(blob.begin(), blob.end(), 0.0);
  return out;
}

void round_to_f32(ProbeParams& params) {
  for (auto blob : parameter_blobs(params)) {
    for (double& x : blob) x = static_cast<double>(static_cast<float>(x));
  }
}

const Theta& theta_of(const ProbeParams& params) noexcept {
  return std::visit([](const auto& p) -> const Theta& { return p.theta; }, params);
}

std::span<const double> value_weights_of(const ProbeParams& params) noexcept {
  return std::visit([](const auto& p) { return std::span<const double>(p.value); }, params);
}

// ---------------------------------------------------------------------------
// Input validation
// ---------------------------------------------------------------------------

void validate_inputs(const ProbeParams& params, const SequenceInputs& inputs) {
  const auto& reps = inputs.reps;
  if (reps.rank() != 2) throw ShapeError("representations must be n x d");
  const std::size_t n = reps.dim(0);
  if (reps.dim(1) != model_dim(params)) {
    throw ShapeError("representation dim " + std::to_string(reps.dim(1)) + " differs from model dim " +
                     std::to_string(model_dim(params)));
  }
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, TomParams>) {
          if (p.query.cols != reps.dim(1) || p.key.cols != reps.dim(1) || p.query.rows != p.key.rows ||
              p.query.rows == 0) {
            throw ShapeError("tom projections must both be r x d");
          }
        } else if constexpr (std::is_same_v<T, LtqkParams>) {
          if (!inputs.head_queries || !inputs.head_keys) throw ShapeError("ltqk needs per-head queries and keys");
          const auto& q = *inputs.head_queries;
          const auto& k = *inputs.head_keys;
          if (q.rank() != 3 || q.shape() != k.shape()) throw ShapeError("head queries/keys must both be N_h x n x d_h");
          if (q.dim(0) != p.query.size() || p.key.size() != p.query.size()) {
            throw ShapeError("head count differs from the ltqk parameters");
          }
          if (q.dim(1) != n) throw ShapeError("head tensors and representations disagree on n");
          for (std::size_t h = 0; h < p.query.size(); ++h) {
            if (p.query[h].cols != q.dim(2) || p.key[h].cols != q.dim(2) || p.query[h].rows != p.query[0].rows ||
                p.key[h].rows != p.query[0].rows) {
              throw ShapeError("ltqk head projections must all be r x d_h");
            }
          }
        } else {
          if (!inputs.attention) throw ShapeError("lcattn needs attention scores");
          const auto& a = *inputs.attention;
          if (a.rank() != 4 || a.dim(0) != p.num_layers || a.dim(1) != p.num_heads || a.dim(2) != n ||
              a.dim(3) != n) {
            throw ShapeError("attention must be (L+1) x N_h x n x n matching the lcattn parameters");
          }
          if (p.weights.size() != p.num_layers * p.num_heads) throw ShapeError("lcattn weight count mismatch");
        }
      },
      params);
}

// ---------------------------------------------------------------------------
// Matching scores
// ---------------------------------------------------------------------------

MatchMatrix::MatchMatrix(std::size_t n, std::size_t window)
    : n_(n), window_(window), values_(n * std::min(n, window), 0.0) {
  if (window == 0) throw std::invalid_argument("window must be >= 1");
}

std::size_t MatchMatrix::slot(std::size_t i, std::size_t j) const {
  if (i < 1 || i > j || j > n_ || j - i >= window_) throw std::out_of_range("match entry outside the window band");
  return (j - 1) * std::min(n_, window_) + (j - i);
}

namespace detail {

UnitProjection project_normalized(std::span<const float> rows, std::size_t n, const Matrix& weights) {
  const std::size_t d = weights.cols;
  const std::size_t r = weights.rows;
  UnitProjection out{Matrix(n, r), std::vector<double>(n, 0.0), std::vector<std::uint8_t>(n, 0)};
  for (std::size_t t = 0; t < n; ++t) {
    const auto x = rows.subspan(t * d, d);
    auto y = out.unit.row(t);
    double sq = 0.0;
    for (std::size_t a = 0; a < r; ++a) {
      const auto w = weights.row(a);
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += w[c] * static_cast<double>(x[c]);
      y[a] = s;
      sq += s * s;
    }
    const double norm = std::sqrt(sq);
    out.norm[t] = norm;
    if (norm < kNormFloor) {
      out.degenerate[t] = 1;
      std::fill(y.begin(), y.end(), 0.0);
    } else {
      for (double& v : y) v /= norm;
    }
  }
  return out;
}

double attention_logit(const TensorF32& attention, const LcattnParams& params, std::size_t i, std::size_t j) {
  const std::size_t n = attention.dim(2);
  const auto data = attention.data();
  double x = 0.0;
  for (std::size_t l = 0; l < params.num_layers; ++l) {
    for (std::size_t h = 0; h < params.num_heads; ++h) {
      const std::size_t plane = (l * params.num_heads + h) * n * n;
      x += params.weights[l * params.num_heads + h] * static_cast<double>(data[plane + i * n + j]);
    }
  }
  return x;
}

std::size_t pool_argmax(const MatchMatrix& m, std::size_t i, std::size_t j) {
  if (i == j) return i;
  std::size_t best = i + 1;
  for (std::size_t k = i + 2; k <= j; ++k) {
    if (m(k, j) > m(best, j)) best = k;
  }
  return best;
}

std::size_t pool_argmin(const MatchMatrix& m, std::size_t i, std::size_t j) {
  if (i == j) return i;
  std::size_t best = i + 1;
  for (std::size_t k = i + 2; k <= j; ++k) {
    if (m(k, j) < m(best, j)) best = k;
  }
  return best;
}

}  // namespace detail

MatchMatrix tom_match(const TensorF32& reps, const TomParams& params, std::size_t window) {
  if (reps.rank() != 2 || reps.dim(1) != params.query.cols || reps.dim(1) != params.key.cols) {
    throw ShapeError("tom_match: representations must be n x d with d matching the projections");
  }
  const std::size_t n = reps.dim(0);
  const auto q = detail::project_normalized(reps.data(), n, params.query);
  const auto k = detail::project_normalized(reps.data(), n, params.key);
  MatchMatrix m(n, window);
  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t first = j > window ? j - window + 1 : 1;
    for (std::size_t i = first; i <= j; ++i) {
      if (q.degenerate[i - 1] || k.degenerate[j - 1]) ++m.degenerate_pairs;
      m.at(i, j) = detail::unit_cosine(q, i - 1, k, j - 1);
    }
  }
  return m;
}

MatchMatrix ltqk_match(const TensorF32& head_queries, const TensorF32& head_keys, const LtqkParams& params,
                       std::size_t window) {
  if (head_queries.rank() != 3 || head_queries.shape() != head_keys.shape() ||
      head_queries.dim(0) != params.query.size() || params.key.size() != params.query.size()) {
    throw ShapeError("ltqk_match: head tensors must be N_h x n x d_h matching the parameters");
  }
  const std::size_t heads = head_queries.dim(0);
  const std::size_t n = head_queries.dim(1);
  MatchMatrix m(n, window);
  const double scale = 1.0 / static_cast<double>(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    if (params.query[h].cols != head_queries.dim(2) || params.key[h].cols != head_queries.dim(2)) {
      throw ShapeError("ltqk_match: head projection width differs from d_h");
    }
    const auto q = detail::project_normalized(head_queries.slice({h}), n, params.query[h]);
    const auto k = detail::project_normalized(head_keys.slice({h}), n, params.key[h]);
    for (std::size_t j = 1; j <= n; ++j) {
      const std::size_t first = j > window ? j - window + 1 : 1;
      for (std::size_t i = first; i <= j; ++i) {
        if (q.degenerate[i - 1] || k.degenerate[j - 1]) ++m.degenerate_pairs;
        m.at(i, j) += detail::unit_cosine(q, i - 1, k, j - 1);
      }
    }
  }
  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t first = j > window ? j - window + 1 : 1;
    for (std::size_t i = first; i <= j; ++i) m.at(i, j) *= scale;
  }
  return m;
}

MatchMatrix lcattn_match(const TensorF32& attention, const LcattnParams& params, std::size_t window) {
  if (attention.rank() != 4 || attention.dim(0) != params.num_layers || attention.dim(1) != params.num_heads ||
      attention.dim(2) != attention.dim(3) || params.weights.size() != params.num_layers * params.num_heads) {
    throw ShapeError("lcattn_match: attention must be (L+1) x N_h x n x n matching the weights");
  }
  const std::size_t n = attention.dim(2);
  MatchMatrix m(n, window);
  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t first = j > window ? j - window + 1 : 1;
    for (std::size_t i = first; i <= j; ++i) {
      m.at(i, j) = detail::log_sigmoid(detail::attention_logit(attention, params, i - 1, j - 1));
    }
  }
  return m;
}

MatchMatrix match_scores(const ProbeParams& params, const SequenceInputs& inputs, std::size_t window) {
  return std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, TomParams>) {
          return tom_match(inputs.reps, p, window);
        } else if constexpr (std::is_same_v<T, LtqkParams>) {
          if (!inputs.head_queries || !inputs.head_keys) throw ShapeError("ltqk needs per-head queries and keys");
          return ltqk_match(*inputs.head_queries, *inputs.head_keys, p, window);
        } else {
          if (!inputs.attention) throw ShapeError("lcattn needs attention scores");
          return lcattn_match(*inputs.attention, p, window);
        }
      },
      params);
}

// ---------------------------------------------------------------------------
// Values, features, probabilities
// ---------------------------------------------------------------------------

TokenValues value_probe(const TensorF32& reps, std::span<const double> value_weights) {
  if (reps.rank() != 2 || reps.dim(1) != value_weights.size()) {
    throw ShapeError("value_probe: representations must be n x d with d = |W_V|");
  }
  const std::size_t n = reps.dim(0);
  const std::size_t d = reps.dim(1);
  const auto data = reps.data();
  std::vector<double> v(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += value_weights[c] * static_cast<double>(data[t * d + c]);
    v[t] = s;
  }
  return TokenValues(std::move(v));
}

SpanFeatures assemble_features(const MatchMatrix& m, const TokenValues& v, const Span& span) {
  const std::size_t i = span.start;
  const std::size_t j = span.end;
  return SpanFeatures{m(i, j), m(detail::pool_argmax(m, i, j), j), m(detail::pool_argmin(m, i, j), j), v(j),
                      v(j + 1)};
}

double span_logit(const SpanFeatures& features, const Theta& theta) noexcept {
  double s = 0.0;
  for (std::size_t f = 0; f < kNumFeatures; ++f) s += theta[f] * features[f];
  return std::clamp(s, -kLogitClamp, kLogitClamp);
}

double span_probability(const SpanFeatures& features, const Theta& theta) noexcept {
  return detail::sigmoid(span_logit(features, theta));
}

SpanProbMatrix score_all_spans(const ProbeParams& params, const SequenceInputs& inputs, std::size_t window) {
  validate_inputs(params, inputs);
  const MatchMatrix m = match_scores(params, inputs, window);
  const TokenValues v = value_probe(inputs.reps, value_weights_of(params));
  const Theta& theta = theta_of(params);
  SpanProbMatrix out;
  out.n = inputs.n_tokens();
  out.window = window;
  const auto spans = enumerate_spans(out.n, window);
  out.probs.reserve(spans.size());
  for (const Span& s : spans) out.probs.push_back(span_probability(assemble_features(m, v, s), theta));
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint conversion
// ---------------------------------------------------------------------------

namespace {

std::vector<float> to_floats(std::span<const double> values) {
  std::vector<float> out(values.size());
  std::transform(values.begin(), values.end(), out.begin(), [](double x) { return static_cast<float>(x); });
  return out;
}

std::vector<double> to_doubles(std::span<const float> values) {
  return {values.begin(), values.end()};
}

Matrix to_matrix(std::span<const float> values, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  std::copy(values.begin(), values.end(), m.data.begin());
  return m;
}

Theta to_theta(const CheckpointBlob& blob) {
  Theta t{};
  std::copy(blob.data.begin(), blob.data.end(), t.begin());
  return t;
}

}  // namespace

Checkpoint to_checkpoint(const ProbeModel& model) {
  json meta;
  meta["model_dim"] = model_dim(model.params);
  meta["window"] = model.window;
  meta["layer"] = model.layer;
  meta["backbone"] = model.backbone;
  meta["hyperparameters"] = model.hyperparameters;
  meta["theta_order"] = {"match", "max_pool", "min_pool", "value_end", "value_next"};

  Checkpoint ckpt;
  ckpt.kind = std::string(to_string(model.kind()));
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, TomParams>) {
          meta["rank"] = p.query.rows;
          ckpt.blobs.push_back({"query", {p.query.rows, p.query.cols}, to_floats(p.query.data)});
          ckpt.blobs.push_back({"key", {p.key.rows, p.key.cols}, to_floats(p.key.data)});
        } else if constexpr (std::is_same_v<T, LtqkParams>) {
          const std::size_t heads = p.query.size();
          const std::size_t r = p.query.front().rows;
          const std::size_t dh = p.query.front().cols;
          meta["rank"] = r;
          meta["num_heads"] = heads;
          meta["head_dim"] = dh;
          CheckpointBlob q{"query", {heads, r, dh}, {}};
          CheckpointBlob k{"key", {heads, r, dh}, {}};
          for (std::size_t h = 0; h < heads; ++h) {
            auto qf = to_floats(p.query[h].data);
            auto kf = to_floats(p.key[h].data);
            q.data.insert(q.data.end(), qf.begin(), qf.end());
            k.data.insert(k.data.end(), kf.begin(), kf.end());
          }
          ckpt.blobs.push_back(std::move(q));
          ckpt.blobs.push_back(std::move(k));
        } else {
          meta["num_layers"] = p.num_layers;
          meta["num_heads"] = p.num_heads;
          ckpt.blobs.push_back({"weights", {p.num_layers, p.num_heads}, to_floats(p.weights)});
        }
        ckpt.blobs.push_back({"value", {p.value.size()}, to_floats(p.value)});
        ckpt.blobs.push_back({"theta", {kNumFeatures}, to_floats(p.theta)});
      },
      model.params);
  ckpt.metadata = meta.dump();
  return ckpt;
}

ProbeModel probe_from_checkpoint(const Checkpoint& ckpt) {
  const ProbeKind kind = parse_probe_kind(ckpt.kind);
  const auto layout = expected_probe_blobs(ckpt.kind, ckpt.metadata);
  std::vector<std::pair<std::string, std::vector<std::size_t>>> actual;
  for (const auto& b : ckpt.blobs) actual.emplace_back(b.name, b.shape);
  if (!layout || *layout != actual) throw FormatError("manifest/blob mismatch in " + ckpt.kind + " checkpoint");

  ProbeModel model;
  try {
    const json meta = json::parse(ckpt.metadata);
    model.window = meta.value("window", kDefaultWindow);
    model.layer = meta.value("layer", 0);
    model.backbone = meta.value("backbone", std::string());
    if (auto it = meta.find("hyperparameters"); it != meta.end()) {
      model.hyperparameters = it->get<std::map<std::string, double>>();
    }
    switch (kind) {
      case ProbeKind::tom: {
        const auto& q = ckpt.blob("query");
        TomParams p;
        p.query = to_matrix(q.data, q.shape[0], q.shape[1]);
        p.key = to_matrix(ckpt.blob("key").data, q.shape[0], q.shape[1]);
        p.value = to_doubles(ckpt.blob("value").data);
        p.theta = to_theta(ckpt.blob("theta"));
        model.params = std::move(p);
        break;
      }
      case ProbeKind::ltqk: {
        const auto& q = ckpt.blob("query");
        const auto& k = ckpt.blob("key");
        const std::size_t heads = q.shape[0], r = q.shape[1], dh = q.shape[2];
        LtqkParams p;
        for (std::size_t h = 0; h < heads; ++h) {
          p.query.push_back(to_matrix(std::span<const float>(q.data).subspan(h * r * dh, r * dh), r, dh));
          p.key.push_back(to_matrix(std::span<const float>(k.data).subspan(h * r * dh, r * dh), r, dh));
        }
        p.value = to_doubles(ckpt.blob("value").data);
        p.theta = to_theta(ckpt.blob("theta"));
        model.params = std::move(p);
        break;
      }
      case ProbeKind::lcattn: {
        const auto& w = ckpt.blob("weights");
        LcattnParams p;
        p.num_layers = w.shape[0];
        p.num_heads = w.shape[1];
        p.weights = to_doubles(w.data);
        p.value = to_doubles(ckpt.blob("value").data);
        p.theta = to_theta(ckpt.blob("theta"));
        model.params = std::move(p);
        break;
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("probe checkpoint metadata: ") + e.what());
  }
  return model;
}

// ---------------------------------------------------------------------------
// Representation sources
// ---------------------------------------------------------------------------

std::filesystem::path companion_path(const std::filesystem::path& rep_path, std::string_view suffix) {
  auto stem = rep_path.stem().string();
  auto ext = rep_path.extension().string();
  return rep_path.parent_path() / (stem + std::string(suffix) + ext);
}

std::filesystem::path DirectoryRepSource::resolve(const std::string& rep_file) const {
  std::string name = rep_file;
  static constexpr std::string_view kPlaceholder = "{layer}";
  for (auto pos = name.find(kPlaceholder); pos != std::string::npos; pos = name.find(kPlaceholder, pos)) {
    name.replace(pos, kPlaceholder.size(), std::to_string(layer_));
  }
  return root_ / name;
}

std::shared_ptr<const SequenceInputs> DirectoryRepSource::load(const AnnotatedSequence& seq, ProbeKind kind) const {
  const auto path = resolve(seq.rep_file);
  auto reps = read_tensor(path);
  if (reps.rank() != 2 || reps.dim(0) != seq.n_tokens) {
    throw ShapeError(path.string() + ": expected " + std::to_string(seq.n_tokens) + " x d representations");
  }
  auto inputs = std::make_shared<SequenceInputs>(SequenceInputs{std::move(reps), {}, {}, {}});
  if (kind == ProbeKind::ltqk) {
    inputs->head_queries = read_tensor(companion_path(path, ".q"));
    inputs->head_keys = read_tensor(companion_path(path, ".k"));
  } else if (kind == ProbeKind::lcattn) {
    inputs->attention = read_tensor(companion_path(path, ".attn"));
  }
  return inputs;
}

void InMemoryRepSource::add(std::string seq_id, SequenceInputs inputs) {
  inputs_[std::move(seq_id)] = std::make_shared<const SequenceInputs>(std::move(inputs));
}

std::shared_ptr<const SequenceInputs> InMemoryRepSource::load(const AnnotatedSequence& seq, ProbeKind) const {
  auto it = inputs_.find(seq.seq_id);
  if (it == inputs_.end()) throw IoError("no representations for sequence " + seq.seq_id);
  if (it->second->n_tokens() != seq.n_tokens) {
    throw ShapeError("representations for " + seq.seq_id + " have the wrong token count");
  }
  return it->second;
}

}  // namespace tommer
