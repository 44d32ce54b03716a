// Copyright 2026 The tommer Authors
// SPDX-License-Identifier: Apache-2.0

// tommer: train, run and evaluate mention probes from the command line.
//
// Exit codes: 0 success, 2 usage/config/file errors, 1 anything else. With
// --json, errors are also written to stderr as {"error": {...}}.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tommer/decoding.hpp"
#include "tommer/error.hpp"
#include "tommer/judge.hpp"
#include "tommer/metrics.hpp"
#include "tommer/nerhead.hpp"
#include "tommer/probe.hpp"
#include "tommer/repio.hpp"
#include "tommer/training.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace tommer::cli {
namespace {

// Bad flag values or combinations discovered after parsing.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

std::vector<AnnotatedSequence> load_dataset(const fs::path& path) {
  std::vector<std::string> warnings;
  auto data = read_dataset(path, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << path.string() << ": " << w << '\n';
  return data;
}

SpanSets span_sets_of(const std::vector<Prediction>& preds) {
  SpanSets out;
  for (const auto& p : preds) {
    auto& set = out[p.seq_id];
    for (const auto& s : p.spans) set.insert(s.span);
  }
  return out;
}

ProbeKind parse_kind(const std::string& name) {
  try {
    return parse_probe_kind(name);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  fs::path dataset, reps_dir, out, log;
  std::string variant = "tom";
  TrainConfig config;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* cmd = app.add_subcommand("train", "Train a mention probe and write a checkpoint");
  cmd->add_option("--dataset", a.dataset, "Annotated JSONL dataset")->required();
  cmd->add_option("--reps-dir", a.reps_dir, "Directory the dataset's rep_file paths are relative to")->required();
  cmd->add_option("--variant", a.variant, "tom, ltqk or lcattn")->capture_default_str();
  cmd->add_option("--rank", a.config.rank, "Rank of the matching projections")->capture_default_str();
  cmd->add_option("--layer", a.config.layer, "Backbone layer whose representations are read")->capture_default_str();
  cmd->add_option("--window", a.config.window, "Maximum span length")->capture_default_str();
  cmd->add_option("--epochs", a.config.epochs, "Epochs per training phase")->capture_default_str();
  cmd->add_option("--lr", a.config.lr, "AdamW learning rate")->capture_default_str();
  cmd->add_option("--batch", a.config.batch_size, "Sequences per step")->capture_default_str();
  cmd->add_option("--clip", a.config.grad_clip, "Global gradient-norm clip")->capture_default_str();
  cmd->add_option("--weight-decay", a.config.weight_decay, "Decoupled weight decay")->capture_default_str();
  cmd->add_option("--val-fraction", a.config.val_fraction, "Held-out fraction for model selection")
      ->capture_default_str();
  cmd->add_option("--val-threshold", a.config.val_threshold, "Decoding threshold during validation")
      ->capture_default_str();
  cmd->add_option("--distill-phases", a.config.distill_phases, "Self-distillation phases after the first")
      ->capture_default_str();
  cmd->add_option("--teacher-threshold", a.config.teacher_threshold, "Teacher probability that adds a span")
      ->capture_default_str();
  cmd->add_flag("!--no-reset-student", a.config.reset_student, "Warm-start each phase from its teacher");
  cmd->add_option("--seed", a.config.seed, "Random seed")->capture_default_str();
  cmd->add_option("--backbone", a.config.backbone, "Backbone name stored in the checkpoint");
  cmd->add_option("--out", a.out, "Checkpoint path (.tomc)")->required();
  cmd->add_option("--log", a.log, "Per-step JSONL log (default: <out>.log.jsonl)");
}

int run_train(TrainArgs& a) {
  a.config.variant = parse_kind(a.variant);
  try {
    a.config.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const auto dataset = load_dataset(a.dataset);
  if (dataset.empty()) throw ConfigError("dataset " + a.dataset.string() + " has no records");
  const DirectoryRepSource source(a.reps_dir, a.config.layer);

  std::ostringstream steps;
  const auto result = distill_train(dataset, source, a.config,
                                    [&](const StepRecord& s) {
                                      steps << ordered_json{{"step", s.step}, {"loss", s.loss}, {"alpha", s.alpha},
                                                            {"pos", s.pos}, {"neg", s.neg}, {"lr", s.lr}}
                                                   .dump()
                                            << '\n';
                                    });
  save_checkpoint(to_checkpoint(result.model), a.out);
  write_text(a.log.empty() ? fs::path(a.out.string() + ".log.jsonl") : a.log, steps.str());

  ordered_json summary;
  summary["checkpoint"] = a.out.string();
  summary["phases"] = ordered_json::array();
  for (std::size_t k = 0; k < result.phase_logs.size(); ++k) {
    auto phase = ordered_json::parse(result.phase_logs[k].summary_json());
    phase["added_mentions"] = k == 0 ? 0 : result.added_per_phase[k - 1];
    summary["phases"].push_back(phase);
  }
  std::cout << summary.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

struct InferArgs {
  fs::path ckpt, dataset, reps_dir, out;
  std::optional<int> layer;
  std::string mode = "threshold";
  double tau = 0.5;
};

void add_infer(CLI::App& app, InferArgs& a) {
  auto* cmd = app.add_subcommand("infer", "Score every span and decode mentions");
  cmd->add_option("--ckpt", a.ckpt, "Probe checkpoint")->required();
  cmd->add_option("--dataset", a.dataset, "JSONL dataset (mentions are ignored)")->required();
  cmd->add_option("--reps-dir", a.reps_dir, "Representation directory (default: the dataset's directory)");
  cmd->add_option("--layer", a.layer, "Layer to read (default: the checkpoint's)");
  cmd->add_option("--mode", a.mode, "threshold (nested) or greedy (flat)")->capture_default_str();
  cmd->add_option("--tau", a.tau, "Probability threshold")->capture_default_str();
  cmd->add_option("--out", a.out, "Prediction JSONL")->required();
}

int run_infer(const InferArgs& a) {
  DecodeMode mode;
  try {
    mode = parse_decode_mode(a.mode);
    if (!(a.tau > 0.0 && a.tau < 1.0)) throw std::invalid_argument("--tau must lie in (0, 1)");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const auto model = probe_from_checkpoint(load_checkpoint(a.ckpt));
  const auto dataset = load_dataset(a.dataset);
  const fs::path root = a.reps_dir.empty() ? a.dataset.parent_path() : a.reps_dir;
  const DirectoryRepSource source(root, a.layer.value_or(model.layer));

  std::vector<Prediction> preds;
  preds.reserve(dataset.size());
  for (const auto& seq : dataset) {
    const auto probs = model.score(*source.load(seq, model.kind()));
    preds.push_back({seq.seq_id, decode(probs, a.tau, mode), mode, {}});
  }
  write_predictions(preds, a.out);
  std::size_t spans = 0;
  for (const auto& p : preds) spans += p.spans.size();
  std::cout << ordered_json{{"sequences", preds.size()}, {"spans", spans}, {"out", a.out.string()}}.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::vector<fs::path> preds, gold;
  fs::path report;
  std::string mode = "aggregated";
};

void add_eval(CLI::App& app, EvalArgs& a) {
  auto* cmd = app.add_subcommand("eval", "Exact-match precision, recall and F1 against gold");
  cmd->add_option("--preds", a.preds, "Prediction JSONL, one per benchmark")->required();
  cmd->add_option("--gold", a.gold, "Gold dataset, one per benchmark, same order as --preds")->required();
  cmd->add_option("--report", a.report, "Write the JSON report here as well as to stdout");
  cmd->add_option("--mode", a.mode, "Cross-benchmark aggregation: aggregated or averaged")->capture_default_str();
}

int run_eval(const EvalArgs& a) {
  AggregateMode mode;
  try {
    mode = parse_aggregate_mode(a.mode);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (a.preds.size() != a.gold.size()) throw ConfigError("--preds and --gold need the same number of files");

  std::vector<DatasetReport> reports;
  for (std::size_t k = 0; k < a.gold.size(); ++k) {
    const auto gold_data = load_dataset(a.gold[k]);
    SpanSets gold;
    for (const auto& seq : gold_data) gold[seq.seq_id] = seq.mentions;
    SpanSets pred;
    for (const auto& [id, spans] : gold) pred[id];
    for (const auto& [id, spans] : span_sets_of(read_predictions(a.preds[k]))) {
      if (!gold.count(id)) throw ConfigError(a.preds[k].string() + ": sequence '" + id + "' is not in the gold data");
      pred[id] = spans;
    }
    reports.push_back({a.gold[k].stem().string(), gold.size(), match_prf(pred, gold)});
  }
  const std::string json = report_json(reports, mode);
  if (!a.report.empty()) write_text(a.report, json + "\n");
  std::cout << json << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// dice
// ---------------------------------------------------------------------------

struct DiceArgs {
  std::vector<fs::path> preds;
  fs::path out;
};

void add_dice(CLI::App& app, DiceArgs& a) {
  auto* cmd = app.add_subcommand("dice", "Pairwise Dice agreement between prediction runs");
  cmd->add_option("--preds", a.preds, "Two or more prediction files over the same sequences")->required();
  cmd->add_option("--out", a.out, "CSV output (default: stdout)");
}

int run_dice(const DiceArgs& a) {
  if (a.preds.size() < 2) throw ConfigError("dice needs at least two --preds files");
  std::vector<std::pair<std::string, SpanSets>> runs;
  for (const auto& p : a.preds) runs.emplace_back(p.stem().string(), span_sets_of(read_predictions(p)));
  DiceMatrix matrix;
  try {
    matrix = dice_matrix(runs);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (a.out.empty()) {
    std::cout << matrix.to_csv();
  } else {
    write_text(a.out, matrix.to_csv());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// distill
// ---------------------------------------------------------------------------

struct DistillArgs {
  fs::path ckpt, dataset, reps_dir, out;
  std::optional<int> layer;
  double threshold = 0.90;
};

void add_distill(CLI::App& app, DistillArgs& a) {
  auto* cmd = app.add_subcommand("distill", "Add a teacher's confident spans to a dataset's labels");
  cmd->add_option("--ckpt", a.ckpt, "Teacher checkpoint")->required();
  cmd->add_option("--dataset", a.dataset, "Dataset to augment")->required();
  cmd->add_option("--reps-dir", a.reps_dir, "Representation directory (default: the dataset's directory)");
  cmd->add_option("--layer", a.layer, "Layer to read (default: the checkpoint's)");
  cmd->add_option("--threshold", a.threshold, "Teacher probability that adds a span")->capture_default_str();
  cmd->add_option("--out", a.out, "Augmented JSONL dataset")->required();
}

int run_distill(const DistillArgs& a) {
  if (!(a.threshold > 0.0 && a.threshold < 1.0)) throw ConfigError("--threshold must lie in (0, 1)");
  const auto teacher = probe_from_checkpoint(load_checkpoint(a.ckpt));
  const auto dataset = load_dataset(a.dataset);
  const fs::path root = a.reps_dir.empty() ? a.dataset.parent_path() : a.reps_dir;
  const DirectoryRepSource source(root, a.layer.value_or(teacher.layer));
  const auto aug = distill_augment(dataset, source, teacher, a.threshold);
  write_dataset(aug.dataset, a.out);
  std::cout << ordered_json{{"sequences", aug.dataset.size()}, {"added", aug.added}, {"out", a.out.string()}}.dump(2)
            << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// judge
// ---------------------------------------------------------------------------

struct JudgeArgs {
  fs::path preds, dataset, audit, report;
  std::size_t sample_k = kDefaultJudgeSample;
  std::uint64_t seed = 0;
  std::string api_key_env = "OPENAI_API_KEY";
  JudgeClientConfig client;
  int timeout_s = 60;
  int backoff_ms = 500;
};

void add_judge(CLI::App& app, JudgeArgs& a) {
  auto* cmd = app.add_subcommand("judge", "Estimate precision with a chat-completion model as judge");
  cmd->add_option("--preds", a.preds, "Prediction JSONL")->required();
  cmd->add_option("--dataset", a.dataset, "Dataset carrying token_texts for the predicted sequences")->required();
  cmd->add_option("--audit", a.audit, "Audit JSONL, one record per judged span")->required();
  cmd->add_option("--report", a.report, "Write the summary JSON here as well as to stdout");
  cmd->add_option("--sample-k", a.sample_k, "Spans to judge")->capture_default_str();
  cmd->add_option("--seed", a.seed, "Sampling seed")->capture_default_str();
  cmd->add_option("--base-url", a.client.base_url, "Endpoint root; requests go to <base-url>/chat/completions")
      ->capture_default_str();
  cmd->add_option("--model", a.client.model, "Judge model name")->capture_default_str();
  cmd->add_option("--concurrency", a.client.concurrency, "Requests in flight")->capture_default_str();
  cmd->add_option("--max-attempts", a.client.max_attempts, "HTTP attempts per question")->capture_default_str();
  cmd->add_option("--backoff-ms", a.backoff_ms, "Initial retry backoff")->capture_default_str();
  cmd->add_option("--timeout", a.timeout_s, "Per-request timeout in seconds")->capture_default_str();
  cmd->add_option("--context-radius", a.client.context_radius, "Tokens shown on each side of the span")
      ->capture_default_str();
  cmd->add_option("--api-key-env", a.api_key_env, "Environment variable holding the API key")->capture_default_str();
}

int run_judge(JudgeArgs& a) {
  if (a.client.concurrency == 0 || a.client.max_attempts == 0) throw ConfigError("--concurrency and --max-attempts must be positive");
  if (const char* key = std::getenv(a.api_key_env.c_str())) a.client.api_key = key;
  a.client.initial_backoff = std::chrono::milliseconds(a.backoff_ms);
  a.client.timeout = std::chrono::seconds(a.timeout_s);

  const auto preds = read_predictions(a.preds);
  std::map<std::string, std::vector<std::string>> tokens;
  for (const auto& seq : load_dataset(a.dataset)) {
    if (seq.token_texts) tokens[seq.seq_id] = *seq.token_texts;
  }
  const auto sample = sample_spans(flatten_predictions(preds), a.sample_k, a.seed);
  for (const auto& ref : sample) {
    if (!tokens.count(ref.seq_id)) throw ConfigError("no token_texts for sequence '" + ref.seq_id + "' in the dataset");
  }

  if (a.audit.has_parent_path()) fs::create_directories(a.audit.parent_path());
  std::ofstream audit(a.audit, std::ios::binary);
  if (!audit) throw IoError("cannot write " + a.audit.string());
  const auto records = judge_spans(sample, tokens, a.client, [&](const JudgeRecord& r) {
    audit << audit_line(r) << '\n';
    audit.flush();
  });
  const std::string summary = summary_json(summarize(records));
  if (!a.report.empty()) write_text(a.report, summary + "\n");
  std::cout << summary << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// ner-train / ner-eval
// ---------------------------------------------------------------------------

struct NerTrainArgs {
  fs::path dataset, reps_dir, out;
  int layer = 0;
  NerTrainConfig config;
};

void add_ner_train(CLI::App& app, NerTrainArgs& a) {
  auto* cmd = app.add_subcommand("ner-train", "Train an entity-typing head on gold typed mentions");
  cmd->add_option("--dataset", a.dataset, "Typed JSONL dataset")->required();
  cmd->add_option("--reps-dir", a.reps_dir, "Representation directory")->required();
  cmd->add_option("--layer", a.layer, "Layer whose representations embed spans")->capture_default_str();
  cmd->add_option("--hidden", a.config.hidden, "Hidden units")->capture_default_str();
  cmd->add_option("--epochs", a.config.epochs, "Epochs")->capture_default_str();
  cmd->add_option("--batch", a.config.batch_size, "Examples per step")->capture_default_str();
  cmd->add_option("--lr", a.config.lr, "AdamW learning rate")->capture_default_str();
  cmd->add_option("--weight-decay", a.config.weight_decay, "Decoupled weight decay")->capture_default_str();
  cmd->add_option("--seed", a.config.seed, "Random seed")->capture_default_str();
  cmd->add_option("--out", a.out, "Checkpoint path (.tomc)")->required();
}

int run_ner_train(const NerTrainArgs& a) {
  if (a.config.hidden == 0 || a.config.batch_size == 0 || !(a.config.lr > 0.0)) {
    throw ConfigError("--hidden, --batch and --lr must be positive");
  }
  const auto dataset = load_dataset(a.dataset);
  const auto types = collect_types(dataset);
  if (types.empty()) throw ConfigError(a.dataset.string() + " carries no entity types");
  const DirectoryRepSource source(a.reps_dir, a.layer);

  // Label space only; the trained head replaces it.
  std::size_t dim = 0;
  for (const auto& seq : dataset) {
    if (!seq.mentions.empty()) {
      dim = 2 * source.load(seq, ProbeKind::tom)->reps.dim(1);
      break;
    }
  }
  if (dim == 0) throw ConfigError(a.dataset.string() + " has no mentions");
  const auto label_space = init_ner_head(dim, types, 1, 0);
  const auto examples = build_ner_examples(dataset, source, MentionSource::gold, nullptr, label_space);
  const auto head = train_ner_head(examples, types, dim, a.config);
  save_checkpoint(ner_to_checkpoint(head, a.layer), a.out);
  std::cout << ordered_json{{"examples", examples.size()}, {"types", types}, {"out", a.out.string()}}.dump(2) << '\n';
  return 0;
}

struct NerEvalArgs {
  fs::path ckpt, dataset, reps_dir, preds, out, report;
  std::optional<int> layer;
  std::string mentions = "predictions";
};

void add_ner_eval(CLI::App& app, NerEvalArgs& a) {
  auto* cmd = app.add_subcommand("ner-eval", "Type mentions with a trained head and score (span, type) matches");
  cmd->add_option("--ckpt", a.ckpt, "Entity-typing checkpoint")->required();
  cmd->add_option("--dataset", a.dataset, "Typed gold dataset")->required();
  cmd->add_option("--reps-dir", a.reps_dir, "Representation directory (default: the dataset's directory)");
  cmd->add_option("--layer", a.layer, "Layer to read (default: the checkpoint's)");
  cmd->add_option("--mentions", a.mentions, "Spans to type: predictions or gold")->capture_default_str();
  cmd->add_option("--preds", a.preds, "Prediction JSONL (needed with --mentions predictions)");
  cmd->add_option("--out", a.out, "Typed prediction JSONL");
  cmd->add_option("--report", a.report, "Write the JSON report here as well as to stdout");
}

int run_ner_eval(const NerEvalArgs& a) {
  MentionSource mentions;
  try {
    mentions = parse_mention_source(a.mentions);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (mentions == MentionSource::predictions && a.preds.empty()) throw ConfigError("--mentions predictions needs --preds");

  int ckpt_layer = 0;
  const auto head = ner_from_checkpoint(load_checkpoint(a.ckpt), &ckpt_layer);
  const auto dataset = load_dataset(a.dataset);
  const fs::path root = a.reps_dir.empty() ? a.dataset.parent_path() : a.reps_dir;
  const DirectoryRepSource source(root, a.layer.value_or(ckpt_layer));

  SpanSets spans;
  if (mentions == MentionSource::predictions) {
    spans = span_sets_of(read_predictions(a.preds));
  } else {
    for (const auto& seq : dataset) spans[seq.seq_id] = seq.mentions;
  }

  TypedSpanSets typed;
  std::vector<Prediction> out;
  for (const auto& seq : dataset) {
    auto& pred = typed[seq.seq_id];
    Prediction p{seq.seq_id, {}, DecodeMode::threshold, {}};
    const auto it = spans.find(seq.seq_id);
    if (it != spans.end() && !it->second.empty()) {
      const auto inputs = source.load(seq, ProbeKind::tom);
      for (const auto& s : it->second) {
        const auto c = classify_span(span_embedding(inputs->reps, s), head);
        pred[s] = head.label_names[c.label];
        p.spans.push_back({s, c.probs[c.label]});
        p.types.push_back(head.label_names[c.label]);
      }
    }
    out.push_back(std::move(p));
  }
  if (!a.out.empty()) write_predictions(out, a.out);

  const PRF prf = ner_f1(typed, gold_types(dataset));
  const std::string json = ordered_json{{"mentions", std::string(to_string(mentions))},
                                        {"precision", prf.precision},
                                        {"recall", prf.recall},
                                        {"f1", prf.f1},
                                        {"tp", prf.tp},
                                        {"fp", prf.fp},
                                        {"fn", prf.fn}}
                               .dump(2);
  if (!a.report.empty()) write_text(a.report, json + "\n");
  std::cout << json << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  s = s.substr(b, e - b + 1);
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) s = s.substr(1, s.size() - 2);
  return s;
}

// Expands every `--config FILE` after the subcommand name into the options it
// sets, skipping options already given on the command line. Lines are
// key=value; blank lines, '#' comments and [section] headers are ignored.
std::vector<std::string> with_config_overlay(CLI::App& app, std::vector<std::string> args) {
  std::size_t sub_at = 1;
  while (sub_at < args.size() && args[sub_at].starts_with("-")) ++sub_at;
  if (sub_at >= args.size()) return args;
  CLI::App* sub = nullptr;
  try {
    sub = app.get_subcommand(args[sub_at]);
  } catch (const CLI::OptionNotFound&) {
    return args;
  }

  std::vector<std::string> files;
  std::set<std::string> given;
  for (std::size_t k = sub_at + 1; k < args.size(); ++k) {
    const std::string& a = args[k];
    if (!a.starts_with("--")) continue;
    const std::string name = a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2);
    given.insert(name);
    if (name == "config") {
      if (a.find('=') != std::string::npos) {
        files.push_back(a.substr(a.find('=') + 1));
      } else if (k + 1 < args.size()) {
        files.push_back(args[k + 1]);
      }
    }
  }

  std::vector<std::string> extra;
  for (const auto& file : files) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config file " + file);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      line = trim(line);
      if (line.empty() || line.front() == '#' || line.front() == '[') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(file + ":" + std::to_string(line_no) + ": expected key=value");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key == "config" || given.count(key)) continue;
      const CLI::Option* opt = sub->get_option_no_throw("--" + key);
      if (opt == nullptr) throw ConfigError(file + ":" + std::to_string(line_no) + ": unknown option '" + key + "'");
      given.insert(key);
      if (opt->get_expected_max() == 0) {
        if (value == "true" || value == "1") extra.push_back("--" + key);
      } else {
        extra.push_back("--" + key);
        extra.push_back(value);
      }
    }
  }
  args.insert(args.begin() + static_cast<std::ptrdiff_t>(sub_at) + 1, extra.begin(), extra.end());
  return args;
}

void report_error(bool as_json, int code, std::string_view type, const std::string& message) {
  std::cerr << "error: " << message << '\n';
  if (as_json) {
    std::cerr << ordered_json{{"error", {{"code", code}, {"type", type}, {"message", message}}}}.dump() << '\n';
  }
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Mention detection probes over frozen language-model representations"};
  app.require_subcommand(1);
  bool as_json = false;
  app.add_flag("--json", as_json, "Also report errors as JSON on stderr");

  TrainArgs train_args;
  InferArgs infer_args;
  EvalArgs eval_args;
  DiceArgs dice_args;
  DistillArgs distill_args;
  JudgeArgs judge_args;
  NerTrainArgs ner_train_args;
  NerEvalArgs ner_eval_args;
  add_train(app, train_args);
  add_infer(app, infer_args);
  add_eval(app, eval_args);
  add_dice(app, dice_args);
  add_distill(app, distill_args);
  add_judge(app, judge_args);
  add_ner_train(app, ner_train_args);
  add_ner_eval(app, ner_eval_args);
  std::vector<std::string> config_files;
  for (auto* sub : app.get_subcommands({})) {
    sub->add_option("--config", config_files, "key=value file of option values; command-line flags take precedence");
  }

  try {
    auto args = with_config_overlay(app, std::vector<std::string>(argv, argv + argc));
    std::vector<char*> ptrs;
    for (auto& a : args) ptrs.push_back(a.data());
    app.parse(static_cast<int>(ptrs.size()), ptrs.data());
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    if (as_json) report_error(true, 2, "usage", e.what());
    return 2;
  } catch (const ConfigError& e) {
    report_error(as_json, 2, "config", e.what());
    return 2;
  }

  try {
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "train") return run_train(train_args);
    if (cmd == "infer") return run_infer(infer_args);
    if (cmd == "eval") return run_eval(eval_args);
    if (cmd == "dice") return run_dice(dice_args);
    if (cmd == "distill") return run_distill(distill_args);
    if (cmd == "judge") return run_judge(judge_args);
    if (cmd == "ner-train") return run_ner_train(ner_train_args);
    if (cmd == "ner-eval") return run_ner_eval(ner_eval_args);
    return 2;
  } catch (const ConfigError& e) {
    report_error(as_json, 2, "config", e.what());
    return 2;
  } catch (const IoError& e) {
    report_error(as_json, 2, "io", e.what());
    return 2;
  } catch (const FormatError& e) {
    report_error(as_json, 2, "format", e.what());
    return 2;
  } catch (const std::exception& e) {
    report_error(as_json, 1, "runtime", e.what());
    return 1;
  }
}

}  // namespace tommer::cli

int main(int argc, char** argv) { return tommer::cli::run(argc, argv); }
