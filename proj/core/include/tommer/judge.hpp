// Copyright 2026 The tommer Authors
// SPDX-License-Identifier: Apache-2.0

// Precision estimation with a chat-completion model as judge.
//
// Each predicted span is shown to the judge inside a window of surrounding
// tokens, marked with [[...]]. The judge answers with a short explanation
// followed by yes or no, which parse_verdict turns into a verdict.

#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "tommer/decoding.hpp"
#include "tommer/repio.hpp"
#include "tommer/span.hpp"

namespace tommer {

inline constexpr std::size_t kDefaultContextRadius = 32;
inline constexpr std::size_t kDefaultJudgeSample = 10000;

/// The judge's system instruction, sent verbatim.
extern const std::string_view kJudgeSystemPrompt;

enum class Verdict { yes, no, unparsed };

/// "TRUE", "FALSE" or "UNPARSED".
std::string_view to_string(Verdict verdict) noexcept;
Verdict parse_verdict_name(std::string_view name);

/// Joins tokens into text. Tokens that carry a leading-space marker (' ',
/// U+0120 or U+2581, as byte-level BPE and sentencepiece vocabularies do) are
/// concatenated with the marker turned into a space; otherwise tokens are
/// joined with single spaces.
std::string detokenize(const std::vector<std::string>& tokens);

/// Up to `radius` tokens on each side of the span, the span wrapped in
/// [[...]], "..." where the window cuts the sequence.
std::string context_window(const std::vector<std::string>& tokens, const Span& span, std::size_t radius);

struct JudgePrompt {
  std::string system;
  std::string user;  // the context window in double quotes
};

JudgePrompt build_prompt(const std::vector<std::string>& tokens, const Span& span,
                         std::size_t radius = kDefaultContextRadius);

/// Looks at the final sentence of the response for a standalone "yes" or
/// "no" (any case); the last one found decides.
Verdict parse_verdict(std::string_view response);

struct SpanRef {
  std::string seq_id;
  Span span;

  friend bool operator==(const SpanRef&, const SpanRef&) = default;
};

/// Every predicted span, in file order.
std::vector<SpanRef> flatten_predictions(const std::vector<Prediction>& predictions);

/// Uniform sample of min(k, |spans|) spans without replacement, returned in
/// their original order.
std::vector<SpanRef> sample_spans(const std::vector<SpanRef>& spans, std::size_t k, std::uint64_t seed);

struct JudgeClientConfig {
  /// Endpoint root; requests go to {base_url}/chat/completions.
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "gpt-4.1-mini";
  std::string api_key;
  std::size_t concurrency = 4;
  std::size_t max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::seconds timeout{60};
  std::size_t context_radius = kDefaultContextRadius;
};

struct JudgeRecord {
  std::string seq_id;
  Span span;
  std::string context;  // user message sent to the judge
  std::string raw_response;
  Verdict verdict = Verdict::unparsed;
  std::size_t attempts = 0;  // HTTP requests made
  bool failed = false;       // retries exhausted without a usable response
  std::string error;
};

/// One record per input span, in input order. `tokens` maps seq_id to the
/// sequence's token texts. `on_record`, when set, is called in input order
/// as records complete, so an audit file can be written incrementally.
std::vector<JudgeRecord> judge_spans(const std::vector<SpanRef>& spans,
                                     const std::map<std::string, std::vector<std::string>>& tokens,
                                     const JudgeClientConfig& config,
                                     const std::function<void(const JudgeRecord&)>& on_record = {});

struct JudgeSummary {
  std::size_t total = 0;
  std::size_t yes = 0;
  std::size_t no = 0;
  std::size_t unparsed = 0;  // includes failed requests
  std::size_t failed = 0;
  /// yes / (yes + no); 0 when nothing parsed.
  double precision = 0.0;
};

JudgeSummary summarize(const std::vector<JudgeRecord>& records);
std::string summary_json(const JudgeSummary& summary);

/// Audit JSONL, one JudgeRecord per line.
std::string audit_line(const JudgeRecord& record);
void write_audit(const std::vector<JudgeRecord>& records, std::ostream& out);
std::vector<JudgeRecord> parse_audit(std::istream& in);
std::vector<JudgeRecord> read_audit(const std::filesystem::path& path);

}  // namespace tommer
