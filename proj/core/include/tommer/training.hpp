// Copyright 2026 The tommer Authors
// SPDX-License-Identifier: Apache-2.0

// Training loop and self-distillation.
//
// Sequences are shuffled each epoch and cut into batches of `batch_size`;
// each batch is one optimizer step (BBCE, global-norm clipping, AdamW). A
// seeded fraction of the data is held out and decoded at `val_threshold` after
// every epoch; the epoch with the best validation F1 (earliest on ties) is
// returned. When validation F1 has not improved for `patience` steps the
// learning rate is halved.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tommer/loss.hpp"
#include "tommer/metrics.hpp"
#include "tommer/optim.hpp"
#include "tommer/probe.hpp"
#include "tommer/repio.hpp"

namespace tommer {

struct TrainConfig {
  ProbeKind variant = ProbeKind::tom;
  std::size_t epochs = 8;
  std::size_t batch_size = 16;
  std::size_t window = kDefaultWindow;
  std::size_t rank = 64;
  double lr = 1e-2;
  double weight_decay = 0.01;
  double grad_clip = 2.0;
  std::size_t distill_phases = 1;
  double teacher_threshold = 0.90;
  bool reset_student = true;
  double val_fraction = 0.02;
  double val_threshold = 0.5;
  std::size_t patience = 5000;
  double plateau_factor = 0.5;
  std::uint64_t seed = 0;
  int layer = 0;
  std::string backbone;

  /// Throws std::invalid_argument naming the first bad field.
  void validate() const;
};

struct StepRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double alpha = 0.0;
  std::size_t pos = 0;
  std::size_t neg = 0;
  double lr = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::size_t step = 0;   // steps taken so far
  double mean_loss = 0.0;
  PRF validation;
  double lr = 0.0;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 0 = initialization
  double best_val_f1 = 0.0;
  std::size_t train_sequences = 0;
  std::size_t val_sequences = 0;
  CoverageReport coverage;
  std::vector<std::string> val_seq_ids;

  /// One JSON object per step: {"step","loss","alpha","pos","neg","lr"}.
  std::string steps_jsonl() const;
  /// Summary: epochs, best epoch, coverage, split sizes.
  std::string summary_json() const;
};

struct TrainResult {
  ProbeModel model;  // parameters rounded to f32
  TrainLog log;
};

struct TrainOptions {
  /// Distillation phase; selects the seed stream for initialization and shuffling.
  std::uint32_t phase = 0;
  /// Start from these parameters instead of a fresh initialization.
  const ProbeParams* warm_start = nullptr;
  std::function<void(const StepRecord&)> on_step;
};

/// Fresh parameters for `config.variant` shaped after `inputs`: matrices
/// uniform in +-1/sqrt(fan_in), theta zero.
ProbeParams initialize_params(const TrainConfig& config, const SequenceInputs& inputs, std::uint32_t phase = 0);

/// Deterministic for fixed data, config and seed. epochs = 0 returns the
/// initialization.
TrainResult train(const std::vector<AnnotatedSequence>& dataset, const RepSource& source, const TrainConfig& config,
                  const TrainOptions& options = {});

/// Every enumerated span with teacher probability >= threshold is added to
/// the mentions. Added mentions are untyped, so types are dropped.
struct AugmentResult {
  std::vector<AnnotatedSequence> dataset;
  std::size_t added = 0;
};

AugmentResult distill_augment(const std::vector<AnnotatedSequence>& dataset, const RepSource& source,
                              const ProbeModel& teacher, double threshold);

struct DistillResult {
  ProbeModel model;
  std::vector<TrainLog> phase_logs;
  std::vector<std::size_t> added_per_phase;
};

/// Phase 0 trains on the given labels; each further phase augments the
/// current labels with the previous model as teacher and retrains, from a
/// fresh initialization when reset_student is set. Held-out validation
/// sequences are never augmented.
DistillResult distill_train(const std::vector<AnnotatedSequence>& dataset, const RepSource& source,
                            const TrainConfig& config, std::function<void(const StepRecord&)> on_step = {});

}  // namespace tommer
