// Copyright 2026 The tommer Authors
// SPDX-License-Identifier: Apache-2.0

#include "tommer/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "probe_internal.hpp"

namespace tommer {

double balance_alpha(std::size_t positives, std::size_t negatives) noexcept {
  return positives == 0 ? 1.0 : static_cast<double>(negatives) / static_cast<double>(positives);
}

namespace {

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

void count_labels(std::span<const std::uint8_t> labels, BbceTerms& terms) {
  for (auto y : labels) (y ? terms.positives : terms.negatives)++;
}

// Per-class sums of -log p in extended precision. The positive mass is
// formed as Neg * sum / Pos rather than by weighting each term, so that at
// uniform p the two class masses round to the same double.
struct MassSums {
  long double positive = 0.0L;
  long double negative = 0.0L;
};

void accumulate_masses(std::span<const double> probs, std::span<const std::uint8_t> labels, MassSums& sums) {
  for (std::size_t s = 0; s < probs.size(); ++s) {
    const double p = clamp_prob(probs[s]);
    if (labels[s]) {
      sums.positive -= std::log(p);
    } else {
      sums.negative -= std::log1p(-p);
    }
  }
}

void finish_masses(const MassSums& sums, BbceTerms& terms) {
  terms.positive_mass =
      terms.positives == 0
          ? 0.0
          : static_cast<double>(static_cast<long double>(terms.negatives) * sums.positive /
                                static_cast<long double>(terms.positives));
  terms.negative_mass = static_cast<double>(sums.negative);
}

// Forward state kept for the backward pass of one sequence.
struct ForwardCache {
  MatchMatrix match;
  TokenValues values;
  std::vector<SpanFeatures> features;
  std::vector<double> raw_logits;
  std::vector<double> probs;
};

ForwardCache forward(const ProbeParams& params, const SequenceInputs& inputs, std::size_t window) {
  validate_inputs(params, inputs);
  ForwardCache c{match_scores(params, inputs, window), value_probe(inputs.reps, value_weights_of(params)), {}, {}, {}};
  const Theta& theta = theta_of(params);
  const auto spans = enumerate_spans(inputs.n_tokens(), window);
  c.features.reserve(spans.size());
  c.raw_logits.reserve(spans.size());
  c.probs.reserve(spans.size());
  for (const Span& s : spans) {
    const auto f = assemble_features(c.match, c.values, s);
    double raw = 0.0;
    for (std::size_t k = 0; k < kNumFeatures; ++k) raw += theta[k] * f[k];
    c.features.push_back(f);
    c.raw_logits.push_back(raw);
    c.probs.push_back(span_probability(f, theta));
  }
  return c;
}

// d loss / d(v_t) projected back onto W_V: grad_V += sum_t dv_t z_t.
void value_backward(const TensorF32& reps, std::span<const double> dv, std::vector<double>& grad_value) {
  const std::size_t d = reps.dim(1);
  const auto z = reps.data();
  for (std::size_t t = 0; t < dv.size(); ++t) {
    if (dv[t] == 0.0) continue;
    for (std::size_t c = 0; c < d; ++c) grad_value[c] += dv[t] * static_cast<double>(z[t * d + c]);
  }
}

// Backward through m_ij = <q_i/|q_i|, k_j/|k_j|> with q = W_Q x, k = W_K y,
// scaled by `scale`. Accumulates into grad_query / grad_key (r x width).
void cosine_backward(const MatchMatrix& dm, double scale, std::span<const float> rows, std::size_t n,
                     const Matrix& wq, const Matrix& wk, Matrix& grad_query, Matrix& grad_key) {
  const auto q = detail::project_normalized(rows, n, wq);
  const auto k = detail::project_normalized(rows, n, wk);
  const std::size_t r = wq.rows;
  const std::size_t width = wq.cols;
  Matrix dq(n, r);
  Matrix dk(n, r);
  const std::size_t w = dm.window();
  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t first = j > w ? j - w + 1 : 1;
    for (std::size_t i = first; i <= j; ++i) {
      const double g = dm(i, j) * scale;
      if (g == 0.0 || q.degenerate[i - 1] || k.degenerate[j - 1]) continue;
      const double cosv = detail::unit_cosine(q, i - 1, k, j - 1);
      const auto qi = q.unit.row(i - 1);
      const auto kj = k.unit.row(j - 1);
      auto dqi = dq.row(i - 1);
      auto dkj = dk.row(j - 1);
      const double gq = g / q.norm[i - 1];
      const double gk = g / k.norm[j - 1];
      for (std::size_t a = 0; a < r; ++a) {
        dqi[a] += gq * (kj[a] - cosv * qi[a]);
        dkj[a] += gk * (qi[a] - cosv * kj[a]);
      }
    }
  }
  for (std::size_t t = 0; t < n; ++t) {
    const auto x = rows.subspan(t * width, width);
    for (std::size_t a = 0; a < r; ++a) {
      const double gq = dq(t, a);
      const double gk = dk(t, a);
      if (gq == 0.0 && gk == 0.0) continue;
      auto rq = grad_query.row(a);
      auto rk = grad_key.row(a);
      for (std::size_t c = 0; c < width; ++c) {
        rq[c] += gq * static_cast<double>(x[c]);
        rk[c] += gk * static_cast<double>(x[c]);
      }
    }
  }
}

void match_backward(const ProbeParams& params, const SequenceInputs& inputs, const MatchMatrix& dm,
                    ProbeParams& grads) {
  const std::size_t n = inputs.n_tokens();
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, TomParams>) {
          auto& g = std::get<TomParams>(grads);
          cosine_backward(dm, 1.0, inputs.reps.data(), n, p.query, p.key, g.query, g.key);
        } else if constexpr (std::is_same_v<T, LtqkParams>) {
          auto& g = std::get<LtqkParams>(grads);
          const std::size_t heads = p.query.size();
          const double scale = 1.0 / static_cast<double>(heads);
          for (std::size_t h = 0; h < heads; ++h) {
            // Queries and keys come from different tensors, so project them separately.
            const auto qrows = inputs.head_queries->slice({h});
            const auto krows = inputs.head_keys->slice({h});
            const auto q = detail::project_normalized(qrows, n, p.query[h]);
            const auto k = detail::project_normalized(krows, n, p.key[h]);
            const std::size_t r = p.query[h].rows;
            const std::size_t dh = p.query[h].cols;
            Matrix dq(n, r);
            Matrix dk(n, r);
            const std::size_t w = dm.window();
            for (std::size_t j = 1; j <= n; ++j) {
              const std::size_t first = j > w ? j - w + 1 : 1;
              for (std::size_t i = first; i <= j; ++i) {
                const double gm = dm(i, j) * scale;
                if (gm == 0.0 || q.degenerate[i - 1] || k.degenerate[j - 1]) continue;
                const double cosv = detail::unit_cosine(q, i - 1, k, j - 1);
                const auto qi = q.unit.row(i - 1);
                const auto kj = k.unit.row(j - 1);
                auto dqi = dq.row(i - 1);
                auto dkj = dk.row(j - 1);
                for (std::size_t a = 0; a < r; ++a) {
                  dqi[a] += gm / q.norm[i - 1] * (kj[a] - cosv * qi[a]);
                  dkj[a] += gm / k.norm[j - 1] * (qi[a] - cosv * kj[a]);
                }
              }
            }
            for (std::size_t t = 0; t < n; ++t) {
              for (std::size_t a = 0; a < r; ++a) {
                auto rq = g.query[h].row(a);
                auto rk = g.key[h].row(a);
                for (std::size_t c = 0; c < dh; ++c) {
                  rq[c] += dq(t, a) * static_cast<double>(qrows[t * dh + c]);
                  rk[c] += dk(t, a) * static_cast<double>(krows[t * dh + c]);
                }
              }
            }
          }
        } else {
          auto& g = std::get<LcattnParams>(grads);
          const auto& attn = *inputs.attention;
          const auto data = attn.data();
          const std::size_t w = dm.window();
          for (std::size_t j = 1; j <= n; ++j) {
            const std::size_t first = j > w ? j - w + 1 : 1;
            for (std::size_t i = first; i <= j; ++i) {
              const double gm = dm(i, j);
              if (gm == 0.0) continue;
              // d/dx log sigmoid(x) = sigmoid(-x)
              const double gx = gm * detail::sigmoid(-detail::attention_logit(attn, p, i - 1, j - 1));
              for (std::size_t lh = 0; lh < p.weights.size(); ++lh) {
                g.weights[lh] += gx * static_cast<double>(data[lh * n * n + (i - 1) * n + (j - 1)]);
              }
            }
          }
        }
      },
      params);
}

Theta& theta_ref(ProbeParams& params) {
  return std::visit([](auto& p) -> Theta& { return p.theta; }, params);
}

std::vector<double>& value_ref(ProbeParams& params) {
  return std::visit([](auto& p) -> std::vector<double>& { return p.value; }, params);
}

}  // namespace

BbceTerms bbce_terms(std::span<const double> probs, std::span<const std::uint8_t> labels) {
  if (probs.size() != labels.size()) throw std::invalid_argument("bbce: probabilities and labels differ in length");
  if (probs.empty()) throw std::invalid_argument("bbce: empty batch");
  BbceTerms terms;
  count_labels(labels, terms);
  terms.alpha = balance_alpha(terms.positives, terms.negatives);
  MassSums sums;
  accumulate_masses(probs, labels, sums);
  finish_masses(sums, terms);
  return terms;
}

double bbce_loss(std::span<const double> probs, std::span<const std::uint8_t> labels) {
  return bbce_terms(probs, labels).loss();
}

BbceTerms batch_loss(const ProbeParams& params, std::span<const TrainingExample> batch, std::size_t window) {
  BbceTerms terms;
  std::vector<SpanProbMatrix> scored;
  scored.reserve(batch.size());
  for (const auto& ex : batch) {
    scored.push_back(score_all_spans(params, *ex.inputs, window));
    if (scored.back().probs.size() != ex.labels.size()) throw std::invalid_argument("label count differs from span count");
    count_labels(ex.labels, terms);
  }
  if (terms.total() == 0) throw std::invalid_argument("bbce: empty batch");
  terms.alpha = balance_alpha(terms.positives, terms.negatives);
  MassSums sums;
  for (std::size_t e = 0; e < batch.size(); ++e) accumulate_masses(scored[e].probs, batch[e].labels, sums);
  finish_masses(sums, terms);
  return terms;
}

LossGradients loss_gradients(const ProbeParams& params, std::span<const TrainingExample> batch, std::size_t window) {
  LossGradients out{BbceTerms{}, zeros_like(params)};
  auto& terms = out.terms;

  std::vector<ForwardCache> caches;
  caches.reserve(batch.size());
  for (const auto& ex : batch) {
    caches.push_back(forward(params, *ex.inputs, window));
    if (caches.back().probs.size() != ex.labels.size()) throw std::invalid_argument("label count differs from span count");
    count_labels(ex.labels, terms);
  }
  if (terms.total() == 0) throw std::invalid_argument("bbce: empty batch");
  terms.alpha = balance_alpha(terms.positives, terms.negatives);
  const double inv_total = 1.0 / static_cast<double>(terms.total());

  MassSums sums;
  const Theta& theta = theta_of(params);
  Theta& grad_theta = theta_ref(out.gradients);
  std::vector<double>& grad_value = value_ref(out.gradients);

  for (std::size_t e = 0; e < batch.size(); ++e) {
    const auto& ex = batch[e];
    const auto& c = caches[e];
    accumulate_masses(c.probs, ex.labels, sums);

    const std::size_t n = ex.inputs->n_tokens();
    MatchMatrix dm(n, window);
    std::vector<double> dv(n, 0.0);
    const auto spans = enumerate_spans(n, window);
    for (std::size_t s = 0; s < spans.size(); ++s) {
      const double p = c.probs[s];
      if (std::abs(c.raw_logits[s]) > kLogitClamp || p < kProbClamp || p > 1.0 - kProbClamp) continue;
      const double y = ex.labels[s] ? 1.0 : 0.0;
      // d loss / d logit
      const double g = -inv_total * (terms.alpha * y * (1.0 - p) - (1.0 - y) * p);
      if (g == 0.0) continue;
      const auto& f = c.features[s];
      for (std::size_t k = 0; k < kNumFeatures; ++k) grad_theta[k] += g * f[k];

      const std::size_t i = spans[s].start;
      const std::size_t j = spans[s].end;
      dm.at(i, j) += g * theta[0];
      dm.at(detail::pool_argmax(c.match, i, j), j) += g * theta[1];
      dm.at(detail::pool_argmin(c.match, i, j), j) += g * theta[2];
      dv[j - 1] += g * theta[3];
      if (j < n) dv[j] += g * theta[4];
    }
    value_backward(ex.inputs->reps, dv, grad_value);
    match_backward(params, *ex.inputs, dm, out.gradients);
  }
  finish_masses(sums, terms);
  return out;
}

}  // namespace tommer
