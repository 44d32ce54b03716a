// Copyright 2026 The tommer Authors
// SPDX-License-Identifier: Apache-2.0

#include "tommer/training.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "json.hpp"
#include "random_internal.hpp"
#include "tommer/decoding.hpp"
#include "tommer/error.hpp"

namespace tommer {

using ordered_json = nlohmann::ordered_json;

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("invalid training config: " + what); };
  if (batch_size == 0) fail("batch_size must be >= 1");
  if (window == 0) fail("window must be >= 1");
  if (rank == 0) fail("rank must be >= 1");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (weight_decay < 0.0) fail("weight_decay must be >= 0");
  if (!(grad_clip > 0.0)) fail("grad_clip must be positive");
  if (!(teacher_threshold > 0.0 && teacher_threshold < 1.0)) fail("teacher_threshold must lie in (0, 1)");
  if (!(val_threshold > 0.0 && val_threshold < 1.0)) fail("val_threshold must lie in (0, 1)");
  if (val_fraction < 0.0 || val_fraction >= 1.0) fail("val_fraction must lie in [0, 1)");
  if (patience == 0) fail("patience must be >= 1");
  if (!(plateau_factor > 0.0 && plateau_factor <= 1.0)) fail("plateau_factor must lie in (0, 1]");
}

// ---------------------------------------------------------------------------
// Logs
// ---------------------------------------------------------------------------

std::string TrainLog::steps_jsonl() const {
  std::string out;
  for (const auto& s : steps) {
    ordered_json j;
    j["step"] = s.step;
    j["loss"] = s.loss;
    j["alpha"] = s.alpha;
    j["pos"] = s.pos;
    j["neg"] = s.neg;
    j["lr"] = s.lr;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string TrainLog::summary_json() const {
  ordered_json j;
  j["train_sequences"] = train_sequences;
  j["val_sequences"] = val_sequences;
  j["steps"] = steps.size();
  j["best_epoch"] = best_epoch;
  j["best_val_f1"] = best_val_f1;
  j["coverage"] = {{"gold_total", coverage.gold_total},
                   {"gold_labeled", coverage.gold_labeled},
                   {"gold_dropped", coverage.gold_dropped}};
  auto epochs_json = ordered_json::array();
  for (const auto& e : epochs) {
    ordered_json r;
    r["epoch"] = e.epoch;
    r["step"] = e.step;
    r["mean_loss"] = e.mean_loss;
    r["lr"] = e.lr;
    r["val_precision"] = e.validation.precision;
    r["val_recall"] = e.validation.recall;
    r["val_f1"] = e.validation.f1;
    epochs_json.push_back(std::move(r));
  }
  j["epochs"] = std::move(epochs_json);
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

namespace {

void fill_uniform(std::span<double> values, std::size_t fan_in, detail::Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& x : values) x = rng.uniform(-bound, bound);
}

Matrix uniform_matrix(std::size_t rows, std::size_t cols, detail::Rng& rng) {
  Matrix m(rows, cols);
  fill_uniform(m.data, cols, rng);
  return m;
}

// Seed streams: one per (phase, purpose); the split stream is shared by all phases.
constexpr std::uint32_t kSplitStream = 0xFFFFFFFFu;
std::uint32_t init_stream(std::uint32_t phase) { return 2 * phase; }
std::uint32_t shuffle_stream(std::uint32_t phase) { return 2 * phase + 1; }

}  // namespace

ProbeParams initialize_params(const TrainConfig& config, const SequenceInputs& inputs, std::uint32_t phase) {
  auto rng = detail::derived_rng(config.seed, init_stream(phase));
  const std::size_t d = inputs.reps.dim(1);
  std::vector<double> value(d);
  switch (config.variant) {
    case ProbeKind::tom: {
      TomParams p;
      p.query = uniform_matrix(config.rank, d, rng);
      p.key = uniform_matrix(config.rank, d, rng);
      fill_uniform(value, d, rng);
      p.value = std::move(value);
      return p;
    }
    case ProbeKind::ltqk: {
      if (!inputs.head_queries || !inputs.head_keys) throw ShapeError("ltqk needs per-head queries and keys");
      const std::size_t heads = inputs.head_queries->dim(0);
      const std::size_t dh = inputs.head_queries->dim(2);
      LtqkParams p;
      for (std::size_t h = 0; h < heads; ++h) p.query.push_back(uniform_matrix(config.rank, dh, rng));
      for (std::size_t h = 0; h < heads; ++h) p.key.push_back(uniform_matrix(config.rank, dh, rng));
      fill_uniform(value, d, rng);
      p.value = std::move(value);
      return p;
    }
    case ProbeKind::lcattn: {
      if (!inputs.attention) throw ShapeError("lcattn needs attention scores");
      LcattnParams p;
      p.num_layers = inputs.attention->dim(0);
      p.num_heads = inputs.attention->dim(1);
      p.weights.resize(p.num_layers * p.num_heads);
      fill_uniform(p.weights, p.weights.size(), rng);
      fill_uniform(value, d, rng);
      p.value = std::move(value);
      return p;
    }
  }
  throw std::logic_error("unreachable probe kind");
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

namespace {

struct Heldout {
  std::string seq_id;
  std::shared_ptr<const SequenceInputs> inputs;
  std::set<Span> gold;
};

PRF validate_model(const ProbeParams& params, const std::vector<Heldout>& heldout, const TrainConfig& config) {
  SpanSets pred, gold;
  for (const auto& h : heldout) {
    const auto probs = score_all_spans(params, *h.inputs, config.window);
    pred[h.seq_id] = span_set(threshold_decode(probs, config.val_threshold));
    gold[h.seq_id] = h.gold;
  }
  return match_prf(pred, gold);
}

std::map<std::string, double> hyperparameter_map(const TrainConfig& c) {
  return {{"rank", static_cast<double>(c.rank)},
          {"epochs", static_cast<double>(c.epochs)},
          {"batch_size", static_cast<double>(c.batch_size)},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"grad_clip", c.grad_clip},
          {"distill_phases", static_cast<double>(c.distill_phases)},
          {"teacher_threshold", c.teacher_threshold},
          {"reset_student", c.reset_student ? 1.0 : 0.0},
          {"val_fraction", c.val_fraction},
          {"val_threshold", c.val_threshold},
          {"patience", static_cast<double>(c.patience)},
          {"seed", static_cast<double>(c.seed)}};
}

}  // namespace

TrainResult train(const std::vector<AnnotatedSequence>& dataset, const RepSource& source, const TrainConfig& config,
                  const TrainOptions& options) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("training dataset is empty");

  // Seeded hold-out split.
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::size_t n_val = 0;
  if (dataset.size() >= 2 && config.val_fraction > 0.0) {
    n_val = static_cast<std::size_t>(std::ceil(config.val_fraction * static_cast<double>(dataset.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, dataset.size() - 1);
    auto split_rng = detail::derived_rng(config.seed, kSplitStream);
    split_rng.shuffle(order);
  }
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());

  TrainResult result;
  auto& log = result.log;
  log.train_sequences = train_idx.size();
  log.val_sequences = val_idx.size();

  std::vector<TrainingExample> examples;
  examples.reserve(train_idx.size());
  for (std::size_t k : train_idx) {
    const auto& seq = dataset[k];
    auto inputs = source.load(seq, config.variant);
    auto labeled = label_spans(enumerate_spans(inputs->n_tokens(), config.window), seq.mentions);
    log.coverage.gold_total += labeled.coverage.gold_total;
    log.coverage.gold_labeled += labeled.coverage.gold_labeled;
    log.coverage.gold_dropped += labeled.coverage.gold_dropped;
    examples.push_back({std::move(inputs), std::move(labeled.labels)});
  }
  std::vector<Heldout> heldout;
  for (std::size_t k : val_idx) {
    heldout.push_back({dataset[k].seq_id, source.load(dataset[k], config.variant), dataset[k].mentions});
    log.val_seq_ids.push_back(dataset[k].seq_id);
  }

  ProbeParams params = options.warm_start ? *options.warm_start
                                          : initialize_params(config, *examples.front().inputs, options.phase);
  for (const auto& ex : examples) validate_inputs(params, *ex.inputs);
  for (const auto& h : heldout) validate_inputs(params, *h.inputs);

  ProbeParams best = params;
  AdamWState opt(AdamWConfig{config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
  auto shuffle_rng = detail::derived_rng(config.seed, shuffle_stream(options.phase));
  std::size_t step = 0;
  std::size_t steps_since_best = 0;
  bool have_best = false;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> perm(examples.size());
    for (std::size_t k = 0; k < perm.size(); ++k) perm[k] = k;
    shuffle_rng.shuffle(perm);

    double loss_sum = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t b = 0; b < perm.size(); b += config.batch_size) {
      std::vector<TrainingExample> batch;
      for (std::size_t k = b; k < std::min(perm.size(), b + config.batch_size); ++k) batch.push_back(examples[perm[k]]);
      auto lg = loss_gradients(params, batch, config.window);
      auto grads = parameter_blobs(lg.gradients);
      clip_gradients(grads, config.grad_clip);
      const auto const_grads = parameter_blobs(static_cast<const ProbeParams&>(lg.gradients));
      adamw_step(parameter_blobs(params), const_grads, opt);

      ++step;
      ++epoch_steps;
      loss_sum += lg.loss();
      StepRecord rec{step, lg.loss(), lg.terms.alpha, lg.terms.positives, lg.terms.negatives, opt.config.lr};
      log.steps.push_back(rec);
      if (options.on_step) options.on_step(rec);
    }

    EpochRecord er;
    er.epoch = epoch;
    er.step = step;
    er.mean_loss = epoch_steps ? loss_sum / static_cast<double>(epoch_steps) : 0.0;
    er.lr = opt.config.lr;
    steps_since_best += epoch_steps;
    if (!heldout.empty()) {
      er.validation = validate_model(params, heldout, config);
      if (!have_best || er.validation.f1 > log.best_val_f1) {
        have_best = true;
        best = params;
        log.best_epoch = epoch;
        log.best_val_f1 = er.validation.f1;
        steps_since_best = 0;
      } else if (steps_since_best >= config.patience) {
        opt.config.lr *= config.plateau_factor;
        steps_since_best = 0;
      }
    } else {
      best = params;
      log.best_epoch = epoch;
    }
    log.epochs.push_back(er);
  }

  round_to_f32(best);
  result.model.params = std::move(best);
  result.model.window = config.window;
  result.model.layer = config.layer;
  result.model.backbone = config.backbone;
  result.model.hyperparameters = hyperparameter_map(config);
  return result;
}

// ---------------------------------------------------------------------------
// Self-distillation
// ---------------------------------------------------------------------------

AugmentResult distill_augment(const std::vector<AnnotatedSequence>& dataset, const RepSource& source,
                              const ProbeModel& teacher, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("teacher threshold must lie in (0, 1)");
  AugmentResult out;
  out.dataset = dataset;
  for (auto& seq : out.dataset) {
    const auto inputs = source.load(seq, teacher.kind());
    const auto probs = teacher.score(*inputs);
    const auto spans = probs.spans();
    std::size_t added_here = 0;
    for (std::size_t s = 0; s < spans.size(); ++s) {
      if (probs.probs[s] >= threshold && seq.mentions.insert(spans[s]).second) ++added_here;
    }
    if (added_here > 0) seq.mention_types.clear();
    out.added += added_here;
  }
  return out;
}

DistillResult distill_train(const std::vector<AnnotatedSequence>& dataset, const RepSource& source,
                            const TrainConfig& config, std::function<void(const StepRecord&)> on_step) {
  DistillResult out;
  TrainOptions options;
  options.on_step = on_step;
  auto phase0 = train(dataset, source, config, options);
  out.model = std::move(phase0.model);
  out.phase_logs.push_back(std::move(phase0.log));

  // Every phase splits with the same seed, so the held-out sequences stay
  // the same; their gold labels are kept as they are.
  const auto& held_out = out.phase_logs.front().val_seq_ids;
  const std::set<std::string> val_ids(held_out.begin(), held_out.end());

  std::vector<AnnotatedSequence> current = dataset;
  for (std::size_t phase = 1; phase <= config.distill_phases; ++phase) {
    std::vector<AnnotatedSequence> train_part;
    for (const auto& seq : current) {
      if (!val_ids.count(seq.seq_id)) train_part.push_back(seq);
    }
    auto aug = distill_augment(train_part, source, out.model, config.teacher_threshold);
    out.added_per_phase.push_back(aug.added);
    std::size_t next = 0;
    for (auto& seq : current) {
      if (!val_ids.count(seq.seq_id)) seq = std::move(aug.dataset[next++]);
    }

    TrainOptions opts;
    opts.phase = static_cast<std::uint32_t>(phase);
    opts.on_step = on_step;
    const ProbeParams teacher_params = out.model.params;
    if (!config.reset_student) opts.warm_start = &teacher_params;
    auto res = train(current, source, config, opts);
    out.model = std::move(res.model);
    out.phase_logs.push_back(std::move(res.log));
  }
  return out;
}

}  // namespace tommer
