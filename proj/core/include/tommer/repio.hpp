// Copyright 2026 The tommer Authors
// SPDX-License-Identifier: Apache-2.0

// Readers and writers for the three on-disk artifacts:
//
//   TOMR tensor file   "TOMR" | u32 version=1 | u32 ndim | ndim x u64 dims | f32 payload
//   TOMC checkpoint    "TOMC" | u32 version=1 | u64 manifest length | JSON manifest | f32 blobs
//   dataset            UTF-8 JSON lines, one AnnotatedSequence per line
//
// All integers and floats are little-endian. Token indices are 1-based and
// inclusive in every file.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tommer/span.hpp"
#include "tommer/tensor.hpp"

namespace tommer {

inline constexpr std::uint32_t kTensorFormatVersion = 1;
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

/// Exact byte size of a TOMR file: 12 + 8*ndim + 4*numel.
constexpr std::size_t tensor_file_size(std::size_t ndim, std::size_t numel) noexcept {
  return 12 + 8 * ndim + 4 * numel;
}

std::string encode_tensor(const TensorF32& tensor);
TensorF32 decode_tensor(std::string_view bytes);

TensorF32 read_tensor(const std::filesystem::path& path);
void write_tensor(const TensorF32& tensor, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

struct AnnotatedSequence {
  std::string seq_id;
  std::size_t n_tokens = 0;
  std::set<Span> mentions;
  /// Entity type per mention, for typed (NER) datasets. Empty when untyped.
  std::map<Span, std::string> mention_types;
  /// Representation file, relative to the representation directory. May hold
  /// a `{layer}` placeholder that is substituted with the probed layer.
  std::string rep_file;
  std::optional<std::vector<std::string>> token_texts;

  bool typed() const noexcept { return !mention_types.empty(); }
};

/// Parses JSONL records. Duplicate mentions are dropped and reported through
/// `warnings` when given. Throws FormatError naming the offending line.
std::vector<AnnotatedSequence> parse_dataset(std::istream& in, std::vector<std::string>* warnings = nullptr);
std::vector<AnnotatedSequence> read_dataset(const std::filesystem::path& path,
                                            std::vector<std::string>* warnings = nullptr);

void write_dataset(std::span<const AnnotatedSequence> sequences, std::ostream& out);
void write_dataset(std::span<const AnnotatedSequence> sequences, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

struct CheckpointBlob {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> data;
};

/// A TOMC checkpoint. `metadata` is a JSON object holding everything except
/// the kind and blob table (rank, model_dim, layer, backbone, hyperparameters,
/// ...). The writer stores it canonically (sorted keys), so a load/save cycle
/// is byte-stable.
struct Checkpoint {
  std::string kind;
  std::string metadata = "{}";
  std::vector<CheckpointBlob> blobs;

  const CheckpointBlob& blob(std::string_view name) const;
};

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
/// Validates the blob table against the payload and, for probe kinds
/// (tom, ltqk, lcattn), every blob shape against the declared rank and dims.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Expected blob shapes for a probe checkpoint, derived from its metadata.
/// Returns nothing for kinds that carry no fixed layout.
std::optional<std::vector<std::pair<std::string, std::vector<std::size_t>>>> expected_probe_blobs(
    std::string_view kind, std::string_view metadata);

std::string read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::string_view bytes);

}  // namespace tommer
