// Copyright 2026 The tommer Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "synthetic.hpp"
#include "tommer/decoding.hpp"
#include "tommer/error.hpp"
#include "tommer/metrics.hpp"
#include "tommer/training.hpp"

namespace tommer {
namespace {

using testing::SyntheticConfig;
using testing::make_synthetic_corpus;

TrainConfig small_config() {
  TrainConfig c;
  c.rank = 4;
  c.epochs = 2;
  c.batch_size = 8;
  c.distill_phases = 0;
  c.val_fraction = 0.1;
  c.seed = 3;
  return c;
}

SyntheticConfig small_corpus(std::size_t sequences = 40) {
  SyntheticConfig s;
  s.sequences = sequences;
  s.dim = 8;
  s.min_tokens = 4;
  s.max_tokens = 9;
  return s;
}

TEST(TrainConfigTest, RejectsBadFields) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.teacher_threshold = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.lr = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.val_fraction = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(TrainConfigTest, DefaultsFollowReferenceSetup) {
  const TrainConfig c;
  EXPECT_EQ(c.epochs, 8u);
  EXPECT_EQ(c.batch_size, 16u);
  EXPECT_EQ(c.window, 25u);
  EXPECT_EQ(c.rank, 64u);
  EXPECT_EQ(c.lr, 1e-2);
  EXPECT_EQ(c.grad_clip, 2.0);
  EXPECT_EQ(c.distill_phases, 1u);
  EXPECT_EQ(c.teacher_threshold, 0.9);
  EXPECT_TRUE(c.reset_student);
}

TEST(InitializeTest, UniformFanInBoundsAndZeroTheta) {
  const auto corpus = make_synthetic_corpus(small_corpus(2));
  const auto inputs = corpus.source->load(corpus.dataset[0], ProbeKind::tom);
  TrainConfig c = small_config();
  c.rank = 5;
  const auto p = std::get<TomParams>(initialize_params(c, *inputs));
  EXPECT_EQ(p.query.rows, 5u);
  EXPECT_EQ(p.query.cols, 8u);
  const double bound = 1.0 / std::sqrt(8.0);
  for (double w : p.query.data) EXPECT_LE(std::abs(w), bound);
  for (double w : p.value) EXPECT_LE(std::abs(w), bound);
  for (double t : p.theta) EXPECT_EQ(t, 0.0);
  const auto again = std::get<TomParams>(initialize_params(c, *inputs));
  EXPECT_EQ(again.key.data, p.key.data);
  const auto other_phase = std::get<TomParams>(initialize_params(c, *inputs, 1));
  EXPECT_NE(other_phase.key.data, p.key.data);
}

TEST(TrainTest, ZeroEpochsReturnsInitialization) {
  const auto corpus = make_synthetic_corpus(small_corpus());
  TrainConfig c = small_config();
  c.epochs = 0;
  const auto result = train(corpus.dataset, *corpus.source, c);
  EXPECT_EQ(result.log.best_epoch, 0u);
  EXPECT_TRUE(result.log.steps.empty());
  auto init = initialize_params(c, *corpus.source->load(corpus.dataset[0], ProbeKind::tom));
  round_to_f32(init);
  EXPECT_EQ(testing::blobs_of(result.model.params), testing::blobs_of(init));
}

TEST(TrainTest, SameSeedGivesIdenticalCheckpoints) {
  const auto corpus = make_synthetic_corpus(small_corpus());
  const auto a = train(corpus.dataset, *corpus.source, small_config());
  const auto b = train(corpus.dataset, *corpus.source, small_config());
  EXPECT_EQ(encode_checkpoint(to_checkpoint(a.model)), encode_checkpoint(to_checkpoint(b.model)));
  EXPECT_EQ(a.log.steps_jsonl(), b.log.steps_jsonl());

  TrainConfig other = small_config();
  other.seed = 4;
  const auto c = train(corpus.dataset, *corpus.source, other);
  EXPECT_NE(encode_checkpoint(to_checkpoint(a.model)), encode_checkpoint(to_checkpoint(c.model)));
}

TEST(TrainTest, SplitSizesAndStepLog) {
  const auto corpus = make_synthetic_corpus(small_corpus(40));
  TrainConfig c = small_config();
  std::size_t callbacks = 0;
  TrainOptions options;
  options.on_step = [&](const StepRecord&) { ++callbacks; };
  const auto result = train(corpus.dataset, *corpus.source, c, options);
  EXPECT_EQ(result.log.val_sequences, 4u);
  EXPECT_EQ(result.log.train_sequences, 36u);
  EXPECT_EQ(result.log.val_seq_ids.size(), 4u);
  EXPECT_EQ(result.log.steps.size(), 2u * 5);  // ceil(36 / 8) per epoch
  EXPECT_EQ(callbacks, result.log.steps.size());
  EXPECT_EQ(result.log.epochs.size(), 2u);
  for (const auto& s : result.log.steps) {
    EXPECT_GT(s.pos, 0u);
    EXPECT_NEAR(s.alpha, static_cast<double>(s.neg) / static_cast<double>(s.pos), 1e-12);
    EXPECT_EQ(s.lr, c.lr);
  }
  std::istringstream lines(result.log.steps_jsonl());
  std::string first;
  std::getline(lines, first);
  EXPECT_EQ(first.rfind("{\"step\":1,\"loss\":", 0), 0u) << first;
  EXPECT_NE(result.log.summary_json().find("\"best_epoch\""), std::string::npos);
}

TEST(TrainTest, SmallValidationFractionStillHoldsOneOut) {
  const auto corpus = make_synthetic_corpus(small_corpus(10));
  TrainConfig c = small_config();
  c.val_fraction = 0.02;
  c.epochs = 1;
  EXPECT_EQ(train(corpus.dataset, *corpus.source, c).log.val_sequences, 1u);
  c.val_fraction = 0.0;
  const auto none = train(corpus.dataset, *corpus.source, c);
  EXPECT_EQ(none.log.val_sequences, 0u);
  EXPECT_EQ(none.log.best_epoch, 1u);
}

TEST(TrainTest, LossFallsOnPlantedMentions) {
  const auto corpus = make_synthetic_corpus(small_corpus(80));
  TrainConfig c = small_config();
  c.epochs = 6;
  const auto result = train(corpus.dataset, *corpus.source, c);
  EXPECT_LT(result.log.epochs.back().mean_loss, result.log.epochs.front().mean_loss);
}

TEST(TrainTest, WorksForEveryVariant) {
  for (auto kind : {ProbeKind::ltqk, ProbeKind::lcattn}) {
    auto source = std::make_shared<InMemoryRepSource>();
    std::vector<AnnotatedSequence> dataset;
    for (std::uint64_t s = 0; s < 6; ++s) {
      const auto inst = testing::random_instance(kind, {.n = 5, .d = 6}, s, 1);
      AnnotatedSequence seq;
      seq.seq_id = "s" + std::to_string(s);
      seq.n_tokens = inst.batch[0].inputs->n_tokens();
      seq.mentions = {{1, 1}};
      source->add(seq.seq_id, *inst.batch[0].inputs);
      dataset.push_back(seq);
    }
    TrainConfig c = small_config();
    c.variant = kind;
    c.rank = 2;
    const auto result = train(dataset, *source, c);
    EXPECT_EQ(result.model.kind(), kind);
    EXPECT_NO_THROW(probe_from_checkpoint(decode_checkpoint(encode_checkpoint(to_checkpoint(result.model)))));
  }
}

TEST(TrainTest, MissingRepresentationsPropagate) {
  const auto corpus = make_synthetic_corpus(small_corpus(5));
  auto dataset = corpus.dataset;
  dataset[2].seq_id = "missing";
  EXPECT_THROW(train(dataset, *corpus.source, small_config()), IoError);
}

ProbeModel silent_teacher(std::size_t d) {
  TomParams p;
  p.query = Matrix(2, d, 0.1);
  p.key = Matrix(2, d, 0.1);
  p.value.assign(d, 0.0);
  p.theta = {0, 0, 0, 0, 0};  // p = 0.5 everywhere
  return ProbeModel{p, kDefaultWindow, 0, "", {}};
}

TEST(DistillAugmentTest, SilentTeacherAddsNothing) {
  const auto corpus = make_synthetic_corpus(small_corpus(10));
  const auto aug = distill_augment(corpus.dataset, *corpus.source, silent_teacher(8), 0.9);
  EXPECT_EQ(aug.added, 0u);
  for (std::size_t k = 0; k < corpus.dataset.size(); ++k) EXPECT_EQ(aug.dataset[k].mentions, corpus.dataset[k].mentions);
}

TEST(DistillAugmentTest, AddsExactlyTheConfidentSpans) {
  const auto corpus = make_synthetic_corpus(small_corpus(30));
  const auto teacher = train(corpus.dataset, *corpus.source, small_config()).model;
  for (double thr : {0.9, 0.6, 0.3}) {
    const auto aug = distill_augment(corpus.dataset, *corpus.source, teacher, thr);
    std::size_t added = 0;
    for (std::size_t k = 0; k < corpus.dataset.size(); ++k) {
      const auto& seq = corpus.dataset[k];
      const auto probs = teacher.score(*corpus.source->load(seq, ProbeKind::tom));
      std::set<Span> expected = seq.mentions;
      for (const auto& s : threshold_decode(probs, thr)) added += expected.insert(s.span).second;
      EXPECT_EQ(aug.dataset[k].mentions, expected);
    }
    EXPECT_EQ(aug.added, added);
  }
}

TEST(DistillAugmentTest, LowerThresholdNeverRemovesSpans) {
  const auto corpus = make_synthetic_corpus(small_corpus(20));
  const auto teacher = train(corpus.dataset, *corpus.source, small_config()).model;
  const auto high = distill_augment(corpus.dataset, *corpus.source, teacher, 0.8);
  const auto low = distill_augment(corpus.dataset, *corpus.source, teacher, 0.4);
  EXPECT_GE(low.added, high.added);
  for (std::size_t k = 0; k < corpus.dataset.size(); ++k) {
    for (const auto& s : high.dataset[k].mentions) EXPECT_TRUE(low.dataset[k].mentions.count(s));
  }
}

TEST(DistillTrainTest, ZeroPhasesEqualsTrain) {
  const auto corpus = make_synthetic_corpus(small_corpus());
  const auto plain = train(corpus.dataset, *corpus.source, small_config());
  const auto distilled = distill_train(corpus.dataset, *corpus.source, small_config());
  EXPECT_EQ(encode_checkpoint(to_checkpoint(plain.model)), encode_checkpoint(to_checkpoint(distilled.model)));
  EXPECT_EQ(distilled.phase_logs.size(), 1u);
  EXPECT_TRUE(distilled.added_per_phase.empty());
}

TEST(DistillTrainTest, OnePhaseRetrainsAndKeepsSplit) {
  const auto corpus = make_synthetic_corpus(small_corpus());
  TrainConfig c = small_config();
  c.distill_phases = 1;
  c.teacher_threshold = 0.6;
  const auto out = distill_train(corpus.dataset, *corpus.source, c);
  ASSERT_EQ(out.phase_logs.size(), 2u);
  ASSERT_EQ(out.added_per_phase.size(), 1u);
  EXPECT_EQ(out.phase_logs[0].val_seq_ids, out.phase_logs[1].val_seq_ids);
  const auto again = distill_train(corpus.dataset, *corpus.source, c);
  EXPECT_EQ(encode_checkpoint(to_checkpoint(out.model)), encode_checkpoint(to_checkpoint(again.model)));
}

}  // namespace
}  // namespace tommer
