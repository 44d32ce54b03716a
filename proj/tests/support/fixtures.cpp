// Copyright 2026 The tommer Authors
// SPDX-License-Identifier: Apache-2.0

#include "fixtures.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <system_error>

namespace tommer::testing {

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix m(rows, cols);
  for (double& x : m.data) x = u(rng);
  return m;
}

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

Theta random_theta(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Theta t{};
  for (double& x : t) x = g(rng);
  return t;
}

}  // namespace

TensorF32 random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double scale) {
  std::size_t numel = 1;
  for (std::size_t d : shape) numel *= d;
  std::normal_distribution<float> g(0.0f, static_cast<float>(scale));
  std::vector<float> data(numel);
  for (float& x : data) x = g(rng);
  return TensorF32(std::move(shape), std::move(data));
}

RandomInstance random_instance(ProbeKind kind, const InstanceShape& shape, std::uint64_t seed, std::size_t sequences) {
  std::mt19937_64 rng(seed);
  RandomInstance inst;
  switch (kind) {
    case ProbeKind::tom: {
      TomParams p;
      p.query = random_matrix(shape.r, shape.d, rng, 1.0);
      p.key = random_matrix(shape.r, shape.d, rng, 1.0);
      p.value = random_vector(shape.d, rng, 0.3);
      p.theta = random_theta(rng);
      inst.params = std::move(p);
      break;
    }
    case ProbeKind::ltqk: {
      LtqkParams p;
      for (std::size_t h = 0; h < shape.heads; ++h) {
        p.query.push_back(random_matrix(shape.r, shape.head_dim, rng, 1.0));
        p.key.push_back(random_matrix(shape.r, shape.head_dim, rng, 1.0));
      }
      p.value = random_vector(shape.d, rng, 0.3);
      p.theta = random_theta(rng);
      inst.params = std::move(p);
      break;
    }
    case ProbeKind::lcattn: {
      LcattnParams p;
      p.num_layers = shape.layers;
      p.num_heads = shape.heads;
      p.weights = random_vector(shape.layers * shape.heads, rng, 0.5);
      p.value = random_vector(shape.d, rng, 0.3);
      p.theta = random_theta(rng);
      inst.params = std::move(p);
      break;
    }
  }

  std::uniform_int_distribution<std::size_t> len(std::min<std::size_t>(2, shape.n), shape.n);
  std::bernoulli_distribution positive(0.3);
  for (std::size_t s = 0; s < sequences; ++s) {
    const std::size_t n = len(rng);
    auto inputs = std::make_shared<SequenceInputs>(SequenceInputs{random_tensor({n, shape.d}, rng), {}, {}, {}});
    if (kind == ProbeKind::ltqk) {
      inputs->head_queries = random_tensor({shape.heads, n, shape.head_dim}, rng);
      inputs->head_keys = random_tensor({shape.heads, n, shape.head_dim}, rng);
    } else if (kind == ProbeKind::lcattn) {
      inputs->attention = random_tensor({shape.layers, shape.heads, n, n}, rng, 1.5);
    }
    TrainingExample ex{inputs, {}};
    ex.labels.resize(span_count(n, shape.window));
    for (auto& y : ex.labels) y = positive(rng) ? 1 : 0;
    if (std::find(ex.labels.begin(), ex.labels.end(), 1) == ex.labels.end()) ex.labels.front() = 1;
    inst.batch.push_back(std::move(ex));
  }
  return inst;
}

std::vector<std::vector<double>> blobs_of(const ProbeParams& params) {
  std::vector<std::vector<double>> out;
  for (auto blob : parameter_blobs(params)) out.emplace_back(blob.begin(), blob.end());
  return out;
}

std::vector<std::vector<double>> numeric_gradient(const ProbeParams& params, std::span<const TrainingExample> batch,
                                                  std::size_t window, double h) {
  ProbeParams work = params;
  auto blobs = parameter_blobs(work);
  std::vector<std::vector<double>> grads;
  for (auto blob : blobs) {
    std::vector<double> g(blob.size());
    for (std::size_t k = 0; k < blob.size(); ++k) {
      const double saved = blob[k];
      blob[k] = saved + h;
      const double up = batch_loss(work, batch, window).loss();
      blob[k] = saved - h;
      const double down = batch_loss(work, batch, window).loss();
      blob[k] = saved;
      g[k] = (up - down) / (2 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

double max_relative_error(const std::vector<std::vector<double>>& analytic,
                          const std::vector<std::vector<double>>& numeric, double floor) {
  if (analytic.size() != numeric.size()) throw std::invalid_argument("blob count mismatch");
  double worst = 0.0;
  for (std::size_t b = 0; b < analytic.size(); ++b) {
    if (analytic[b].size() != numeric[b].size()) throw std::invalid_argument("blob size mismatch");
    double diff = 0, na = 0, nn = 0;
    for (std::size_t k = 0; k < analytic[b].size(); ++k) {
      const double d = analytic[b][k] - numeric[b][k];
      diff += d * d;
      na += analytic[b][k] * analytic[b][k];
      nn += numeric[b][k] * numeric[b][k];
    }
    const double scale = std::max(std::sqrt(na), std::sqrt(nn));
    if (scale < floor) continue;
    worst = std::max(worst, std::sqrt(diff) / scale);
  }
  return worst;
}

oracle::Mat to_mat(const TensorF32& t) {
  oracle::Mat m(t.dim(0), oracle::Vec(t.dim(1)));
  for (std::size_t r = 0; r < t.dim(0); ++r) {
    for (std::size_t c = 0; c < t.dim(1); ++c) m[r][c] = t.at({r, c});
  }
  return m;
}

oracle::Mat to_mat(const Matrix& in) {
  oracle::Mat m(in.rows, oracle::Vec(in.cols));
  for (std::size_t r = 0; r < in.rows; ++r) {
    for (std::size_t c = 0; c < in.cols; ++c) m[r][c] = in(r, c);
  }
  return m;
}

TempDir::TempDir() {
  static std::atomic<unsigned> counter{0};
  const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
  path_ = std::filesystem::temp_directory_path() /
          ("tommer-test-" + std::to_string(stamp) + "-" + std::to_string(counter++));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

}  // namespace tommer::testing
