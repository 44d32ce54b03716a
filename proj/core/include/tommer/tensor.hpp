// Copyright 2026 The tommer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace tommer {

/// Dense row-major f32 tensor. Shape is non-empty, every dim is positive and
/// the element count always equals the product of the dims.
class TensorF32 {
 public:
  TensorF32(std::vector<std::size_t> shape, std::vector<float> data);

  static TensorF32 zeros(std::vector<std::size_t> shape);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const noexcept { return data_.size(); }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }

  /// Flat offset of a multi-index; throws ShapeError when out of range.
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  float at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

  /// Contiguous trailing slice starting at the given leading index prefix.
  std::span<const float> slice(std::initializer_list<std::size_t> prefix) const;

  /// Bitwise equality of shape and payload.
  bool bit_equal(const TensorF32& other) const noexcept;

  /// True when every element is finite.
  bool all_finite() const noexcept;

 private:
  std::vector<std::size_t> shape_;
  std::vector<float> data_;
};

}  // namespace tommer
