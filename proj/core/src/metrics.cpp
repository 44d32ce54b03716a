// Copyright 2026 The tommer Authors
// SPDX-License-Identifier: Apache-2.0

#include "tommer/metrics.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "json.hpp"

namespace tommer {

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

void require_same_keys(const SpanSets& a, const SpanSets& b, const char* what) {
  const bool same = a.size() == b.size() &&
                    std::equal(a.begin(), a.end(), b.begin(), [](const auto& x, const auto& y) { return x.first == y.first; });
  if (!same) throw std::invalid_argument(std::string(what) + ": sequence keys differ");
}

}  // namespace

double f1_score(double precision, double recall) noexcept {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

PRF PRF::from_counts(std::size_t tp, std::size_t fp, std::size_t fn) noexcept {
  PRF r;
  r.tp = tp;
  r.fp = fp;
  r.fn = fn;
  r.precision = ratio(tp, tp + fp);
  r.recall = ratio(tp, tp + fn);
  r.f1 = f1_score(r.precision, r.recall);
  return r;
}

PRF match_prf(const SpanSets& pred, const SpanSets& gold) {
  require_same_keys(pred, gold, "match_prf");
  std::size_t tp = 0, fp = 0, fn = 0;
  auto ig = gold.begin();
  for (const auto& [key, p] : pred) {
    const auto& g = (ig++)->second;
    std::size_t common = 0;
    for (const Span& s : p) common += g.count(s);
    tp += common;
    fp += p.size() - common;
    fn += g.size() - common;
  }
  return PRF::from_counts(tp, fp, fn);
}

std::string_view to_string(AggregateMode mode) noexcept {
  return mode == AggregateMode::averaged ? "averaged" : "aggregated";
}

AggregateMode parse_aggregate_mode(std::string_view name) {
  if (name == "aggregated") return AggregateMode::aggregated;
  if (name == "averaged") return AggregateMode::averaged;
  throw std::invalid_argument("unknown aggregate mode '" + std::string(name) + "' (expected aggregated or averaged)");
}

PRF aggregate(std::span<const PRF> reports, AggregateMode mode) {
  if (reports.empty()) throw std::invalid_argument("aggregate: no reports");
  std::size_t tp = 0, fp = 0, fn = 0;
  double p = 0.0, r = 0.0, f = 0.0;
  for (const auto& rep : reports) {
    tp += rep.tp;
    fp += rep.fp;
    fn += rep.fn;
    p += rep.precision;
    r += rep.recall;
    f += rep.f1;
  }
  PRF out = PRF::from_counts(tp, fp, fn);
  if (mode == AggregateMode::averaged) {
    const double k = static_cast<double>(reports.size());
    out.precision = p / k;
    out.recall = r / k;
    out.f1 = f / k;
  }
  return out;
}

DiceMatrix dice_matrix(const std::vector<std::pair<std::string, SpanSets>>& runs) {
  if (runs.size() < 2) throw std::invalid_argument("dice_matrix: need at least two runs");
  using Triple = std::pair<std::string, Span>;
  std::vector<std::set<Triple>> pooled;
  pooled.reserve(runs.size());
  for (const auto& [label, sets] : runs) {
    require_same_keys(sets, runs.front().second, "dice_matrix");
    std::set<Triple> all;
    for (const auto& [seq, spans] : sets) {
      for (const Span& s : spans) all.emplace(seq, s);
    }
    pooled.push_back(std::move(all));
  }
  DiceMatrix m;
  const std::size_t k = runs.size();
  m.values.assign(k, std::vector<double>(k, 1.0));
  for (const auto& run : runs) m.labels.push_back(run.first);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) m.values[a][b] = m.values[b][a] = dice(pooled[a], pooled[b]);
  }
  return m;
}

std::string DiceMatrix::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "run";
  for (const auto& l : labels) out << ',' << l;
  out << '\n';
  for (std::size_t a = 0; a < labels.size(); ++a) {
    out << labels[a];
    for (double v : values[a]) out << ',' << v;
    out << '\n';
  }
  return out.str();
}

double cohen_kappa(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cohen_kappa: length mismatch");
  if (a.empty()) throw std::invalid_argument("cohen_kappa: empty sequences");
  const double n = static_cast<double>(a.size());
  std::size_t agree = 0, a_pos = 0, b_pos = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const bool x = a[k] != 0;
    const bool y = b[k] != 0;
    agree += x == y;
    a_pos += x;
    b_pos += y;
  }
  const double po = static_cast<double>(agree) / n;
  const double pa = static_cast<double>(a_pos) / n;
  const double pb = static_cast<double>(b_pos) / n;
  const double pe = pa * pb + (1.0 - pa) * (1.0 - pb);
  if (pe == 1.0) return po == 1.0 ? 1.0 : 0.0;
  return (po - pe) / (1.0 - pe);
}

double judged_precision(std::span<const std::uint8_t> verdicts) {
  if (verdicts.empty()) throw std::invalid_argument("judged_precision: no verdicts");
  std::size_t yes = 0;
  for (auto v : verdicts) yes += v != 0;
  return static_cast<double>(yes) / static_cast<double>(verdicts.size());
}

std::string report_json(const std::vector<DatasetReport>& datasets, AggregateMode mode) {
  using ordered_json = nlohmann::ordered_json;
  auto prf_json = [](const PRF& p) {
    ordered_json j;
    j["precision"] = p.precision;
    j["recall"] = p.recall;
    j["f1"] = p.f1;
    j["tp"] = p.tp;
    j["fp"] = p.fp;
    j["fn"] = p.fn;
    return j;
  };
  ordered_json root;
  root["datasets"] = ordered_json::array();
  std::vector<PRF> prfs;
  for (const auto& d : datasets) {
    ordered_json j;
    j["name"] = d.name;
    j["sequences"] = d.sequences;
    j.update(prf_json(d.prf));
    root["datasets"].push_back(std::move(j));
    prfs.push_back(d.prf);
  }
  if (!prfs.empty()) {
    ordered_json agg;
    agg["mode"] = std::string(to_string(mode));
    agg.update(prf_json(aggregate(prfs, mode)));
    root["aggregate"] = std::move(agg);
  }
  return root.dump(2);
}

}  // namespace tommer
