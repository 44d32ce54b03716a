// Copyright 2026 The tommer Authors
// SPDX-License-Identifier: Apache-2.0

#include "tommer/tensor.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "tommer/error.hpp"

namespace tommer {

namespace {

std::size_t checked_numel(const std::vector<std::size_t>& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must be non-empty");
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dims must be positive");
    n *= d;
  }
  return n;
}

}  // namespace

TensorF32::TensorF32(std::vector<std::size_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  const std::size_t n = checked_numel(shape_);
  if (n != data_.size()) {
    throw ShapeError("tensor data has " + std::to_string(data_.size()) + " elements, shape implies " +
                     std::to_string(n));
  }
}

TensorF32 TensorF32::zeros(std::vector<std::size_t> shape) {
  const std::size_t n = checked_numel(shape);
  return TensorF32(std::move(shape), std::vector<float>(n, 0.0f));
}

std::size_t TensorF32::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) throw ShapeError("index rank does not match tensor rank");
  std::size_t off = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= shape_[axis]) throw ShapeError("tensor index out of range");
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

std::span<const float> TensorF32::slice(std::initializer_list<std::size_t> prefix) const {
  if (prefix.size() > shape_.size()) throw ShapeError("slice prefix longer than tensor rank");
  std::size_t off = 0;
  std::size_t axis = 0;
  for (std::size_t i : prefix) {
    if (i >= shape_[axis]) throw ShapeError("tensor index out of range");
    off = off * shape_[axis] + i;
    ++axis;
  }
  std::size_t inner = 1;
  for (std::size_t a = axis; a < shape_.size(); ++a) inner *= shape_[a];
  return std::span<const float>(data_).subspan(off * inner, inner);
}

bool TensorF32::bit_equal(const TensorF32& other) const noexcept {
  return shape_ == other.shape_ && data_.size() == other.data_.size() &&
         std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0;
}

bool TensorF32::all_finite() const noexcept {
  for (float x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace tommer
