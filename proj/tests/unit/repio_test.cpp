// Copyright 2026 The tommer Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "tommer/error.hpp"
#include "tommer/repio.hpp"

namespace tommer {
namespace {

using testing::TempDir;

std::string le32(std::uint32_t v) {
  std::string s(4, '\0');
  for (int b = 0; b < 4; ++b) s[b] = static_cast<char>((v >> (8 * b)) & 0xFF);
  return s;
}

std::string le64(std::uint64_t v) {
  std::string s(8, '\0');
  for (int b = 0; b < 8; ++b) s[b] = static_cast<char>((v >> (8 * b)) & 0xFF);
  return s;
}

std::string header(std::vector<std::uint64_t> dims) {
  std::string s = "TOMR" + le32(1) + le32(static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) s += le64(d);
  return s;
}

TensorF32 random_shape_tensor(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> rank(1, 3);
  std::uniform_int_distribution<std::size_t> dim(1, 64);
  std::vector<std::size_t> shape(rank(rng));
  for (auto& d : shape) d = dim(rng);
  if (shape.size() == 3) shape[2] = std::min<std::size_t>(shape[2], 8);
  return testing::random_tensor(shape, rng, 10.0);
}

AnnotatedSequence random_sequence(std::mt19937_64& rng, std::size_t index) {
  std::uniform_int_distribution<std::size_t> len(1, 30);
  AnnotatedSequence seq;
  seq.seq_id = "seq-" + std::to_string(index);
  seq.n_tokens = len(rng);
  seq.rep_file = "reps/" + seq.seq_id + ".tomr";
  std::uniform_int_distribution<std::uint32_t> pos(1, static_cast<std::uint32_t>(seq.n_tokens));
  const bool typed = index % 3 == 0;
  for (int k = 0; k < 5; ++k) {
    auto a = pos(rng);
    auto b = pos(rng);
    Span s{std::min(a, b), std::max(a, b)};
    seq.mentions.insert(s);
    if (typed) seq.mention_types[s] = k % 2 ? "PER" : "LOC";
  }
  if (index % 2 == 0) {
    seq.token_texts.emplace();
    for (std::size_t t = 0; t < seq.n_tokens; ++t) seq.token_texts->push_back("tok\"" + std::to_string(t));
  }
  return seq;
}

bool same_sequence(const AnnotatedSequence& a, const AnnotatedSequence& b) {
  return a.seq_id == b.seq_id && a.n_tokens == b.n_tokens && a.mentions == b.mentions &&
         a.mention_types == b.mention_types && a.rep_file == b.rep_file && a.token_texts == b.token_texts;
}

TEST(TensorFileTest, ZeroTensorFromHandWrittenBytes) {
  const std::string bytes = header({3, 4}) + std::string(48, '\0');
  const TensorF32 t = decode_tensor(bytes);
  EXPECT_EQ(t.shape(), (std::vector<std::size_t>{3, 4}));
  for (float x : t.data()) EXPECT_EQ(x, 0.0f);
}

TEST(TensorFileTest, TruncatedPayloadIsRejected) {
  try {
    decode_tensor(header({3, 4}));
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("payload length mismatch"), std::string::npos);
  }
}

TEST(TensorFileTest, RejectsBadMagicVersionAndNonFinite) {
  std::string bytes = header({1}) + std::string(4, '\0');
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_tensor(bad_magic), FormatError);

  std::string bad_version = bytes;
  bad_version[4] = 2;
  EXPECT_THROW(decode_tensor(bad_version), FormatError);

  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::string payload(4, '\0');
  std::memcpy(payload.data(), &nan, 4);
  EXPECT_THROW(decode_tensor(header({1}) + payload), FormatError);

  const float inf = std::numeric_limits<float>::infinity();
  std::memcpy(payload.data(), &inf, 4);
  EXPECT_THROW(decode_tensor(header({1}) + payload), FormatError);

  EXPECT_THROW(decode_tensor(header({}) + payload), FormatError);
  EXPECT_THROW(decode_tensor(header({2, 0})), FormatError);
}

TEST(TensorFileTest, FileSizeFollowsLayout) {
  TempDir dir;
  const TensorF32 t({1, 1}, {0.0f});
  write_tensor(t, dir / "one.tomr");
  EXPECT_EQ(std::filesystem::file_size(dir / "one.tomr"), tensor_file_size(2, 1));
  EXPECT_EQ(tensor_file_size(2, 1), 12u + 8 * 2 + 4);

  const std::string bytes = encode_tensor(TensorF32({2, 3}, {1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(bytes.size(), tensor_file_size(2, 6));
  EXPECT_EQ(bytes.substr(0, 4), "TOMR");
  float third = 0;
  std::memcpy(&third, bytes.data() + 12 + 16 + 8, 4);
  EXPECT_EQ(third, 3.0f);
}

TEST(TensorFileTest, EmptyShapeCannotBeConstructed) {
  EXPECT_THROW(TensorF32({}, {}), ShapeError);
  EXPECT_THROW(TensorF32({2, 2}, {1, 2, 3}), ShapeError);
}

TEST(TensorFileTest, RandomRoundTripIsBitExact) {
  TempDir dir;
  std::mt19937_64 rng(7);
  for (int k = 0; k < 100; ++k) {
    const TensorF32 t = random_shape_tensor(rng);
    const auto path = dir / ("t" + std::to_string(k) + ".tomr");
    write_tensor(t, path);
    EXPECT_TRUE(read_tensor(path).bit_equal(t)) << "case " << k;
  }
}

TEST(TensorFileTest, MissingFileIsIoError) {
  TempDir dir;
  EXPECT_THROW(read_tensor(dir / "absent.tomr"), IoError);
}

TEST(DatasetTest, MinimalRecord) {
  std::istringstream in(R"({"seq_id":"a","n_tokens":5,"mentions":[[2,3]],"rep_file":"a.tomr"})");
  const auto seqs = parse_dataset(in);
  ASSERT_EQ(seqs.size(), 1u);
  EXPECT_EQ(seqs[0].seq_id, "a");
  EXPECT_EQ(seqs[0].n_tokens, 5u);
  EXPECT_EQ(seqs[0].mentions, (std::set<Span>{{2, 3}}));
  EXPECT_EQ(seqs[0].rep_file, "a.tomr");
  EXPECT_FALSE(seqs[0].token_texts.has_value());
  EXPECT_FALSE(seqs[0].typed());
}

TEST(DatasetTest, ZeroBasedMentionIsOutOfRange) {
  std::istringstream in(R"({"seq_id":"a","n_tokens":5,"mentions":[[0,3]],"rep_file":"a.tomr"})");
  try {
    parse_dataset(in);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("span out of range"), std::string::npos);
  }
}

TEST(DatasetTest, ReportsLineOfMalformedRecord) {
  std::istringstream in(
      "{\"seq_id\":\"a\",\"n_tokens\":2,\"mentions\":[],\"rep_file\":\"a\"}\n"
      "{\"seq_id\":\"b\",\n");
  try {
    parse_dataset(in);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(DatasetTest, KeepsFileOrderAndDeduplicates) {
  std::istringstream in(
      "{\"seq_id\":\"z\",\"n_tokens\":3,\"mentions\":[[1,1],[1,1]],\"rep_file\":\"z\"}\n"
      "\n"
      "{\"seq_id\":\"a\",\"n_tokens\":3,\"mentions\":[],\"rep_file\":\"a\"}\n"
      "{\"seq_id\":\"m\",\"n_tokens\":3,\"mentions\":[[1,3],[2,2]],\"rep_file\":\"m\",\"token_texts\":[\"x\",\"y\",\"z\"]}\n");
  std::vector<std::string> warnings;
  const auto seqs = parse_dataset(in, &warnings);
  ASSERT_EQ(seqs.size(), 3u);
  EXPECT_EQ(seqs[0].seq_id, "z");
  EXPECT_EQ(seqs[1].seq_id, "a");
  EXPECT_EQ(seqs[2].seq_id, "m");
  EXPECT_EQ(seqs[0].mentions.size(), 1u);
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_EQ(seqs[2].token_texts->at(1), "y");
}

TEST(DatasetTest, TypedMentions) {
  std::istringstream in(R"({"seq_id":"a","n_tokens":4,"mentions":[[1,2,"PER"],[4,4,"LOC"]],"rep_file":"a"})");
  const auto seqs = parse_dataset(in);
  ASSERT_TRUE(seqs[0].typed());
  EXPECT_EQ(seqs[0].mention_types.at(Span{1, 2}), "PER");
  EXPECT_EQ(seqs[0].mention_types.at(Span{4, 4}), "LOC");
}

TEST(DatasetTest, RandomRoundTripIsSetEqual) {
  TempDir dir;
  std::mt19937_64 rng(11);
  for (int k = 0; k < 100; ++k) {
    std::vector<AnnotatedSequence> seqs;
    for (std::size_t s = 0; s < 4; ++s) seqs.push_back(random_sequence(rng, s + 4 * k));
    const auto path = dir / "d.jsonl";
    write_dataset(seqs, path);
    const auto back = read_dataset(path);
    ASSERT_EQ(back.size(), seqs.size());
    for (std::size_t s = 0; s < seqs.size(); ++s) EXPECT_TRUE(same_sequence(back[s], seqs[s])) << "case " << k;
  }
}

Checkpoint tom_checkpoint(std::size_t r, std::size_t d) {
  Checkpoint c;
  c.kind = "tom";
  c.metadata = R"({"model_dim":)" + std::to_string(d) + R"(,"rank":)" + std::to_string(r) + "}";
  std::mt19937_64 rng(r * 100 + d);
  auto blob = [&](std::string name, std::vector<std::size_t> shape) {
    const TensorF32 t = testing::random_tensor(shape, rng);
    return CheckpointBlob{std::move(name), std::move(shape), {t.data().begin(), t.data().end()}};
  };
  c.blobs = {blob("query", {r, d}), blob("key", {r, d}), blob("value", {d}), blob("theta", {5})};
  return c;
}

TEST(CheckpointTest, TomRoundTripKeepsWeights) {
  TempDir dir;
  const Checkpoint c = tom_checkpoint(4, 8);
  save_checkpoint(c, dir / "c.tomc");
  const Checkpoint back = load_checkpoint(dir / "c.tomc");
  EXPECT_EQ(back.kind, "tom");
  ASSERT_EQ(back.blobs.size(), 4u);
  for (std::size_t b = 0; b < 4; ++b) {
    EXPECT_EQ(back.blobs[b].name, c.blobs[b].name);
    EXPECT_EQ(back.blobs[b].shape, c.blobs[b].shape);
    EXPECT_EQ(std::memcmp(back.blobs[b].data.data(), c.blobs[b].data.data(), 4 * c.blobs[b].data.size()), 0);
  }
  EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(c));
}

TEST(CheckpointTest, DeclaredRankMustMatchBlobs) {
  Checkpoint c = tom_checkpoint(32, 8);
  c.metadata = R"({"model_dim":8,"rank":64})";
  EXPECT_THROW(decode_checkpoint(encode_checkpoint(c)), FormatError);
}

TEST(CheckpointTest, PayloadLengthMustMatchManifest) {
  std::string bytes = encode_checkpoint(tom_checkpoint(2, 3));
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 4)), FormatError);
  EXPECT_THROW(decode_checkpoint(bytes + "xxxx"), FormatError);
  bytes[1] = 'X';
  EXPECT_THROW(decode_checkpoint(bytes), FormatError);
}

TEST(CheckpointTest, ManifestIsCanonicalAndLoadSaveIsByteStable) {
  Checkpoint c;
  c.kind = "custom";
  c.metadata = R"({"zeta":1,"alpha":{"b":2,"a":1}})";
  c.blobs = {{"w", {2}, {1.5f, -2.0f}}};
  const std::string once = encode_checkpoint(c);
  const std::string twice = encode_checkpoint(decode_checkpoint(once));
  EXPECT_EQ(once, twice);
  EXPECT_LT(once.find("\"alpha\""), once.find("\"zeta\""));
}

TEST(CheckpointTest, RandomRoundTripIsBitExact) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> dim(1, 16);
  for (int k = 0; k < 100; ++k) {
    const Checkpoint c = tom_checkpoint(dim(rng), dim(rng));
    const std::string bytes = encode_checkpoint(c);
    EXPECT_EQ(encode_checkpoint(decode_checkpoint(bytes)), bytes);
  }
}

}  // namespace
}  // namespace tommer
