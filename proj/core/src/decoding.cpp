// Copyright 2026 The tommer Authors
// SPDX-License-Identifier: Apache-2.0

#include "tommer/decoding.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "tommer/error.hpp"

namespace tommer {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string_view to_string(DecodeMode mode) noexcept { return mode == DecodeMode::greedy ? "greedy" : "threshold"; }

DecodeMode parse_decode_mode(std::string_view name) {
  if (name == "threshold") return DecodeMode::threshold;
  if (name == "greedy") return DecodeMode::greedy;
  throw std::invalid_argument("unknown decode mode '" + std::string(name) + "' (expected threshold or greedy)");
}

namespace {

void check_tau(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must lie in (0, 1)");
}

}  // namespace

std::vector<ScoredSpan> threshold_decode(const SpanProbMatrix& probs, double tau) {
  check_tau(tau);
  std::vector<ScoredSpan> out;
  const auto spans = probs.spans();
  for (std::size_t s = 0; s < spans.size(); ++s) {
    if (probs.probs[s] >= tau) out.push_back({spans[s], probs.probs[s]});
  }
  return out;
}

std::vector<ScoredSpan> greedy_flat_decode(const SpanProbMatrix& probs, double tau) {
  auto candidates = threshold_decode(probs, tau);
  std::stable_sort(candidates.begin(), candidates.end(), [](const ScoredSpan& a, const ScoredSpan& b) {
    if (a.prob != b.prob) return a.prob > b.prob;
    if (a.span.start != b.span.start) return a.span.start < b.span.start;
    return a.span.length() < b.span.length();
  });
  std::vector<char> taken(probs.n + 2, 0);
  std::vector<ScoredSpan> out;
  for (const auto& c : candidates) {
    bool free = true;
    for (auto t = c.span.start; t <= c.span.end && free; ++t) free = !taken[t];
    if (!free) continue;
    for (auto t = c.span.start; t <= c.span.end; ++t) taken[t] = 1;
    out.push_back(c);
  }
  std::sort(out.begin(), out.end(), [](const ScoredSpan& a, const ScoredSpan& b) { return a.span < b.span; });
  return out;
}

std::vector<ScoredSpan> decode(const SpanProbMatrix& probs, double tau, DecodeMode mode) {
  return mode == DecodeMode::greedy ? greedy_flat_decode(probs, tau) : threshold_decode(probs, tau);
}

std::set<Span> span_set(const std::vector<ScoredSpan>& spans) {
  std::set<Span> out;
  for (const auto& s : spans) out.insert(s.span);
  return out;
}

// ---------------------------------------------------------------------------
// Prediction files
// ---------------------------------------------------------------------------

void write_predictions(const std::vector<Prediction>& predictions, std::ostream& out) {
  for (const auto& pred : predictions) {
    if (!pred.types.empty() && pred.types.size() != pred.spans.size()) {
      throw std::invalid_argument("prediction " + pred.seq_id + ": type count differs from span count");
    }
    ordered_json rec;
    rec["seq_id"] = pred.seq_id;
    auto spans = ordered_json::array();
    for (std::size_t k = 0; k < pred.spans.size(); ++k) {
      const auto& s = pred.spans[k];
      auto entry = ordered_json::array({s.span.start, s.span.end, s.prob});
      if (!pred.types.empty()) entry.push_back(pred.types[k]);
      spans.push_back(std::move(entry));
    }
    rec["spans"] = std::move(spans);
    rec["mode"] = std::string(to_string(pred.mode));
    out << rec.dump() << '\n';
  }
}

void write_predictions(const std::vector<Prediction>& predictions, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_predictions(predictions, out);
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<Prediction> parse_predictions(std::istream& in) {
  std::vector<Prediction> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = "line " + std::to_string(line_no) + ": ";
    try {
      const json rec = json::parse(line);
      Prediction pred;
      pred.seq_id = rec.at("seq_id").get<std::string>();
      pred.mode = parse_decode_mode(rec.value("mode", std::string("threshold")));
      for (const auto& entry : rec.at("spans")) {
        if (!entry.is_array() || entry.size() < 2 || entry.size() > 4) {
          throw FormatError(where + "span must be [s, e, p] or [s, e, p, type]");
        }
        const long long s = entry[0].get<long long>();
        const long long e = entry[1].get<long long>();
        if (s < 1 || e < s) throw FormatError(where + "span out of range");
        const double p = entry.size() >= 3 ? entry[2].get<double>() : 1.0;
        pred.spans.push_back({Span{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(e)}, p});
        if (entry.size() == 4) pred.types.push_back(entry[3].get<std::string>());
      }
      if (!pred.types.empty() && pred.types.size() != pred.spans.size()) {
        throw FormatError(where + "typed and untyped spans mixed in one record");
      }
      out.push_back(std::move(pred));
    } catch (const json::exception& e) {
      throw FormatError(where + e.what());
    } catch (const std::invalid_argument& e) {
      throw FormatError(where + e.what());
    }
  }
  return out;
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open predictions " + path.string());
  try {
    return parse_predictions(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace tommer
