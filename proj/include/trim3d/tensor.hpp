#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "trim3d/error.hpp"

namespace trim3d {

using Activation = std::int8_t;
using Weight = std::int8_t;
using Psum = std::int32_t;

/// Dense row-major 2D array. Element (row, col) lives at row * width + col.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(int height, int width, T fill = T{})
      : height_(height), width_(width), data_(checked_size(height, width), fill) {}
  Tensor(int height, int width, std::vector<T> data) : height_(height), width_(width), data_(std::move(data)) {
    if (data_.size() != checked_size(height, width)) {
      fail(ErrorCode::ShapeMismatch, "element count " + std::to_string(data_.size()) + " does not match " +
                                         std::to_string(height) + "x" + std::to_string(width));
    }
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int row, int col) { return data_[index(row, col)]; }
  const T& operator()(int row, int col) const { return data_[index(row, col)]; }

  T& at(int row, int col) {
    bounds_check(row, col);
    return data_[index(row, col)];
  }
  const T& at(int row, int col) const {
    bounds_check(row, col);
    return data_[index(row, col)];
  }

  bool contains(int row, int col) const noexcept {
    return row >= 0 && col >= 0 && row < height_ && col < width_;
  }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  static std::size_t checked_size(int height, int width) {
    if (height < 0 || width < 0) fail(ErrorCode::ShapeMismatch, "negative tensor dimension");
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
  std::size_t index(int row, int col) const noexcept {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(col);
  }
  void bounds_check(int row, int col) const {
    if (!contains(row, col)) {
      fail(ErrorCode::OutOfBounds, "(" + std::to_string(row) + "," + std::to_string(col) + ") outside " +
                                       std::to_string(height_) + "x" + std::to_string(width_));
    }
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

using TensorI = Tensor<Activation>;
using TensorW = Tensor<Weight>;
using TensorO = Tensor<Psum>;

/// filters[f][c] is the kernel applied by filter f to input channel c.
using FilterBank = std::vector<std::vector<TensorW>>;

template <typename T>
Tensor<T> pad_zero(const Tensor<T>& in, int pad) {
  if (pad == 0) return in;
  Tensor<T> out(in.height() + 2 * pad, in.width() + 2 * pad);
  for (int r = 0; r < in.height(); ++r)
    for (int c = 0; c < in.width(); ++c) out(r + pad, c + pad) = in(r, c);
  return out;
}

/// Uniform over the full signed 8-bit range.
template <typename T = std::int8_t>
Tensor<T> random_tensor(int height, int width, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dist(-128, 127);
  Tensor<T> t(height, width);
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

inline std::vector<TensorI> random_ifmaps(int channels, int height, int width, std::mt19937_64& rng) {
  std::vector<TensorI> out;
  out.reserve(static_cast<std::size_t>(channels));
  for (int c = 0; c < channels; ++c) out.push_back(random_tensor(height, width, rng));
  return out;
}

inline FilterBank random_filters(int filters, int channels, int k, std::mt19937_64& rng) {
  FilterBank bank(static_cast<std::size_t>(filters));
  for (auto& f : bank)
    for (int c = 0; c < channels; ++c) f.push_back(random_tensor(k, k, rng));
  return bank;
}

}  // namespace trim3d
