// Copyright 2026 The tommer Authors
// SPDX-License-Identifier: Apache-2.0

// Random probe instances, finite differences and scratch directories shared
// by the unit and acceptance tests.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "tommer/loss.hpp"
#include "tommer/probe.hpp"

namespace tommer::testing {

struct InstanceShape {
  std::size_t n = 6;
  std::size_t d = 8;
  std::size_t r = 3;
  std::size_t heads = 2;
  std::size_t head_dim = 4;
  std::size_t layers = 2;
  std::size_t window = kDefaultWindow;
};

struct RandomInstance {
  ProbeParams params;
  std::vector<TrainingExample> batch;
};

TensorF32 random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double scale = 1.0);

/// Parameters with random theta and a batch of `sequences` random sequences
/// of lengths in [2, shape.n] with random labels (at least one positive).
RandomInstance random_instance(ProbeKind kind, const InstanceShape& shape, std::uint64_t seed,
                               std::size_t sequences = 2);

/// Central differences of batch_loss for every parameter, blob by blob.
std::vector<std::vector<double>> numeric_gradient(const ProbeParams& params, std::span<const TrainingExample> batch,
                                                  std::size_t window, double h);

/// max over blobs of ||a - b|| / max(||a||, ||b||); blobs where both norms are
/// below `floor` count as agreeing.
double max_relative_error(const std::vector<std::vector<double>>& analytic,
                          const std::vector<std::vector<double>>& numeric, double floor = 1e-10);

std::vector<std::vector<double>> blobs_of(const ProbeParams& params);

/// Conversions into the oracle's nested-vector layout.
oracle::Mat to_mat(const TensorF32& t);  // 2-D tensor
oracle::Mat to_mat(const Matrix& m);

/// Creates a fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace tommer::testing
