// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace s2st {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);

/// Dense row-major array of doubles. Rank-3 tensors use HWC layout, which is
/// how images (X x X x 3) and latents (S x S x C) are stored throughout.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor hwc(std::size_t height, std::size_t width, std::size_t channels, double fill = 0.0) {
    return Tensor({height, width, channels}, fill);
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  std::size_t height() const { return dim(0); }
  std::size_t width() const { return dim(1); }
  std::size_t channels() const { return dim(2); }
  std::size_t dim(std::size_t axis) const;

  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  const std::vector<double>& storage() const noexcept { return values_; }

  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  double& at(std::size_t y, std::size_t x, std::size_t c) noexcept {
    return values_[(y * shape_[1] + x) * shape_[2] + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c) const noexcept {
    return values_[(y * shape_[1] + x) * shape_[2] + c];
  }

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double scale) noexcept;

  /// this += scale * other
  Tensor& axpy(double scale, const Tensor& other);

  void fill(double value) noexcept;
  bool all_finite() const noexcept;

  /// Extract channel `c` of a rank-3 tensor as a flat vector.
  std::vector<double> channel(std::size_t c) const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(double scale, Tensor a);

/// Throws std::invalid_argument naming `context` when shapes differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* context);

double dot(const Tensor& a, const Tensor& b);
double squared_norm(const Tensor& a);
double l2_norm(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);
double mean(const Tensor& a);

/// 64-bit FNV-1a over the raw bytes of the values; used as a content checksum.
std::uint64_t checksum(std::span<const double> values, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string checksum_hex(std::uint64_t value);

}  // namespace s2st
