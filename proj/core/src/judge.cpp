// Copyright 2026 The tommer Authors
// SPDX-License-Identifier: Apache-2.0

#include "tommer/judge.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <fstream>
#include <mutex>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "random_internal.hpp"
#include "tommer/error.hpp"

namespace tommer {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// clang-format off
const std::string_view kJudgeSystemPrompt = R"(You are an expert in entity mention annotation.
A mention is defined as : "something that exists as itself. It does not need  to be of material existence."
In particular, abstractions and legal fictions are usually regarded as entities.  In general, there is also no presumption that an entity is animate, or present. It may  refer to animals; natural features such as mountains; inanimate objects such as tables;  numbers or sets as symbols written on a paper; human contrivances such as laws, corporations and academic disciplines; or supernatural beings such as gods and spirits."

## Instructions
- For each text span provided in [[...]], quickly determine if it is a valid mention as  defined above, regardless of its type, length, or style, but ensuring it is not a fragment.
- Briefly explain in one concise sentence whether the span fits the definition. Then answer with a clear "yes" or "no".)";
// clang-format on

std::string_view to_string(Verdict verdict) noexcept {
  switch (verdict) {
    case Verdict::yes:
      return "TRUE";
    case Verdict::no:
      return "FALSE";
    case Verdict::unparsed:
      return "UNPARSED";
  }
  return "UNPARSED";
}

Verdict parse_verdict_name(std::string_view name) {
  if (name == "TRUE") return Verdict::yes;
  if (name == "FALSE") return Verdict::no;
  if (name == "UNPARSED") return Verdict::unparsed;
  throw std::invalid_argument("unknown verdict '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Prompt construction
// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kMarkerG = "\xC4\xA0";     // U+0120, byte-level BPE
constexpr std::string_view kMarkerSp = "\xE2\x96\x81";  // U+2581, sentencepiece

// Length of the leading-space marker of a token, 0 when it has none.
std::size_t marker_length(std::string_view token) {
  if (token.starts_with(kMarkerG)) return kMarkerG.size();
  if (token.starts_with(kMarkerSp)) return kMarkerSp.size();
  if (token.starts_with(' ')) return 1;
  return 0;
}

bool uses_markers(const std::vector<std::string>& tokens) {
  return std::any_of(tokens.begin(), tokens.end(), [](const std::string& t) { return marker_length(t) > 0; });
}

// Token text with its marker turned into a space (marker mode only).
std::string piece(std::string_view token) {
  const std::size_t m = marker_length(token);
  return m == 0 ? std::string(token) : " " + std::string(token.substr(m));
}

std::string trim_left(std::string s) {
  s.erase(0, s.find_first_not_of(' '));
  return s;
}

std::string join_range(const std::vector<std::string>& tokens, std::size_t first, std::size_t last, bool markers) {
  std::string out;
  for (std::size_t t = first; t <= last && t <= tokens.size(); ++t) {
    if (markers) {
      out += piece(tokens[t - 1]);
    } else {
      if (!out.empty()) out += ' ';
      out += tokens[t - 1];
    }
  }
  return out;
}

}  // namespace

std::string detokenize(const std::vector<std::string>& tokens) {
  if (tokens.empty()) return {};
  return trim_left(join_range(tokens, 1, tokens.size(), uses_markers(tokens)));
}

std::string context_window(const std::vector<std::string>& tokens, const Span& span, std::size_t radius) {
  const std::size_t n = tokens.size();
  if (span.start < 1 || span.start > span.end || span.end > n) throw std::out_of_range("context_window: span out of range");
  const std::size_t lo = span.start > radius ? span.start - radius : 1;
  const std::size_t hi = std::min(n, static_cast<std::size_t>(span.end) + radius);
  const bool markers = uses_markers(tokens);

  std::string left = span.start > lo ? join_range(tokens, lo, span.start - 1, markers) : std::string();
  std::string inner = join_range(tokens, span.start, span.end, markers);
  std::string right = hi > span.end ? join_range(tokens, span.end + 1, hi, markers) : std::string();

  std::string text;
  if (markers) {
    // A leading space of the span belongs outside the brackets.
    if (inner.starts_with(' ')) {
      left += ' ';
      inner.erase(0, 1);
    }
    text = trim_left(left + "[[" + inner + "]]" + right);
  } else {
    text = left;
    if (!text.empty()) text += ' ';
    text += "[[" + inner + "]]";
    if (!right.empty()) text += ' ' + right;
  }
  if (lo > 1) text = "..." + text;
  if (hi < n) text += " ...";
  return text;
}

JudgePrompt build_prompt(const std::vector<std::string>& tokens, const Span& span, std::size_t radius) {
  return {std::string(kJudgeSystemPrompt), "\"" + context_window(tokens, span, radius) + "\""};
}

// ---------------------------------------------------------------------------
// Verdict parsing
// ---------------------------------------------------------------------------

Verdict parse_verdict(std::string_view response) {
  auto is_trailing = [](char c) {
    return std::isspace(static_cast<unsigned char>(c)) || c == '.' || c == '!' || c == '?' || c == '"' || c == '\'' ||
           c == '*' || c == ')' || c == '`';
  };
  std::size_t end = response.size();
  while (end > 0 && is_trailing(response[end - 1])) --end;
  std::size_t begin = end;
  while (begin > 0) {
    const char c = response[begin - 1];
    if (c == '.' || c == '!' || c == '?' || c == '\n') break;
    --begin;
  }
  const std::string_view sentence = response.substr(begin, end - begin);

  Verdict verdict = Verdict::unparsed;
  std::size_t k = 0;
  while (k < sentence.size()) {
    if (!std::isalpha(static_cast<unsigned char>(sentence[k]))) {
      ++k;
      continue;
    }
    std::size_t w = k;
    while (w < sentence.size() && std::isalpha(static_cast<unsigned char>(sentence[w]))) ++w;
    std::string word(sentence.substr(k, w - k));
    std::transform(word.begin(), word.end(), word.begin(), [](unsigned char c) { return std::tolower(c); });
    if (word == "yes") verdict = Verdict::yes;
    if (word == "no") verdict = Verdict::no;
    k = w;
  }
  return verdict;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

std::vector<SpanRef> flatten_predictions(const std::vector<Prediction>& predictions) {
  std::vector<SpanRef> out;
  for (const auto& p : predictions) {
    for (const auto& s : p.spans) out.push_back({p.seq_id, s.span});
  }
  return out;
}

std::vector<SpanRef> sample_spans(const std::vector<SpanRef>& spans, std::size_t k, std::uint64_t seed) {
  if (k >= spans.size()) return spans;
  std::vector<std::size_t> idx(spans.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  detail::Rng rng(seed);
  // Partial Fisher-Yates: the first k slots end up a uniform k-subset.
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  std::vector<SpanRef> out;
  out.reserve(k);
  for (std::size_t i : idx) out.push_back(spans[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Remote judging
// ---------------------------------------------------------------------------

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // prefix + /chat/completions
};

Endpoint parse_endpoint(const std::string& base_url) {
  const auto scheme = base_url.find("://");
  if (scheme == std::string::npos) throw std::invalid_argument("base url needs a scheme: " + base_url);
  const auto slash = base_url.find('/', scheme + 3);
  Endpoint e;
  e.origin = base_url.substr(0, slash);
  std::string prefix = slash == std::string::npos ? "" : base_url.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  e.path = prefix + "/chat/completions";
  return e;
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

struct Exchange {
  bool ok = false;
  std::string content;
  std::string error;
};

class JudgeClient {
 public:
  explicit JudgeClient(const JudgeClientConfig& config) : config_(config), endpoint_(parse_endpoint(config.base_url)) {}

  // Up to max_attempts requests with exponential backoff on 429, 5xx and
  // transport errors. `attempts` counts requests made.
  Exchange ask(const JudgePrompt& prompt, std::size_t& attempts) const {
    httplib::Client client(endpoint_.origin);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    const json body = {{"model", config_.model},
                       {"messages",
                        json::array({{{"role", "system"}, {"content", prompt.system}},
                                     {{"role", "user"}, {"content", prompt.user}}})}};
    const std::string payload = body.dump();

    Exchange ex;
    auto backoff = config_.initial_backoff;
    for (std::size_t attempt = 1; attempt <= std::max<std::size_t>(1, config_.max_attempts); ++attempt) {
      if (attempt > 1) {
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
      }
      ++attempts;
      auto res = client.Post(endpoint_.path, headers, payload, "application/json");
      if (!res) {
        ex.error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status != 200) {
        ex.error = "HTTP " + std::to_string(res->status);
        if (retryable_status(res->status)) continue;
        return ex;
      }
      try {
        const json reply = json::parse(res->body);
        ex.content = reply.at("choices").at(0).at("message").at("content").get<std::string>();
        ex.ok = true;
        ex.error.clear();
      } catch (const json::exception& e) {
        ex.error = std::string("malformed reply: ") + e.what();
      }
      return ex;
    }
    return ex;
  }

 private:
  const JudgeClientConfig& config_;
  Endpoint endpoint_;
};

JudgeRecord judge_one(const JudgeClient& client, const SpanRef& ref, const std::vector<std::string>& tokens,
                      std::size_t radius) {
  JudgeRecord rec;
  rec.seq_id = ref.seq_id;
  rec.span = ref.span;
  const auto prompt = build_prompt(tokens, ref.span, radius);
  rec.context = prompt.user;

  // An unparsable answer earns one more try.
  for (int round = 0; round < 2; ++round) {
    const auto ex = client.ask(prompt, rec.attempts);
    if (!ex.ok) {
      rec.failed = true;
      rec.error = ex.error;
      rec.verdict = Verdict::unparsed;
      return rec;
    }
    rec.raw_response = ex.content;
    rec.verdict = parse_verdict(ex.content);
    if (rec.verdict != Verdict::unparsed) break;
  }
  return rec;
}

}  // namespace

std::vector<JudgeRecord> judge_spans(const std::vector<SpanRef>& spans,
                                     const std::map<std::string, std::vector<std::string>>& tokens,
                                     const JudgeClientConfig& config,
                                     const std::function<void(const JudgeRecord&)>& on_record) {
  for (const auto& ref : spans) {
    if (!tokens.count(ref.seq_id)) throw std::invalid_argument("no token texts for sequence " + ref.seq_id);
  }
  const JudgeClient client(config);
  std::vector<JudgeRecord> records(spans.size());
  std::vector<char> done(spans.size(), 0);
  std::size_t next_to_emit = 0;
  std::mutex mu;
  std::atomic<std::size_t> next_task{0};

  auto worker = [&] {
    for (std::size_t i = next_task++; i < spans.size(); i = next_task++) {
      JudgeRecord rec = judge_one(client, spans[i], tokens.at(spans[i].seq_id), config.context_radius);
      std::lock_guard lock(mu);
      records[i] = std::move(rec);
      done[i] = 1;
      // Reorder buffer: emit every completed record at the head of the queue.
      while (next_to_emit < spans.size() && done[next_to_emit]) {
        if (on_record) on_record(records[next_to_emit]);
        ++next_to_emit;
      }
    }
  };

  const std::size_t n_workers = std::clamp<std::size_t>(config.concurrency, 1, std::max<std::size_t>(1, spans.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return records;
}

JudgeSummary summarize(const std::vector<JudgeRecord>& records) {
  JudgeSummary s;
  s.total = records.size();
  for (const auto& r : records) {
    s.failed += r.failed;
    switch (r.verdict) {
      case Verdict::yes:
        ++s.yes;
        break;
      case Verdict::no:
        ++s.no;
        break;
      case Verdict::unparsed:
        ++s.unparsed;
        break;
    }
  }
  s.precision = s.yes + s.no == 0 ? 0.0 : static_cast<double>(s.yes) / static_cast<double>(s.yes + s.no);
  return s;
}

std::string summary_json(const JudgeSummary& s) {
  ordered_json j;
  j["total"] = s.total;
  j["true"] = s.yes;
  j["false"] = s.no;
  j["unparsed"] = s.unparsed;
  j["failed"] = s.failed;
  j["judged_precision"] = s.precision;
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Audit files
// ---------------------------------------------------------------------------

std::string audit_line(const JudgeRecord& r) {
  ordered_json j;
  j["seq_id"] = r.seq_id;
  j["span"] = {r.span.start, r.span.end};
  j["context"] = r.context;
  j["raw_response"] = r.raw_response;
  j["verdict"] = std::string(to_string(r.verdict));
  j["attempts"] = r.attempts;
  j["failed"] = r.failed;
  j["error"] = r.error;
  return j.dump();
}

void write_audit(const std::vector<JudgeRecord>& records, std::ostream& out) {
  for (const auto& r : records) out << audit_line(r) << '\n';
}

std::vector<JudgeRecord> parse_audit(std::istream& in) {
  std::vector<JudgeRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      JudgeRecord r;
      r.seq_id = j.at("seq_id").get<std::string>();
      const auto span = j.at("span").get<std::vector<std::uint32_t>>();
      if (span.size() != 2) throw FormatError("span must be [s, e]");
      r.span = Span{span[0], span[1]};
      r.context = j.at("context").get<std::string>();
      r.raw_response = j.value("raw_response", std::string());
      r.verdict = parse_verdict_name(j.at("verdict").get<std::string>());
      r.attempts = j.value("attempts", std::size_t{0});
      r.failed = j.value("failed", false);
      r.error = j.value("error", std::string());
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw FormatError("audit line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<JudgeRecord> read_audit(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open audit file " + path.string());
  return parse_audit(in);
}

}  // namespace tommer
