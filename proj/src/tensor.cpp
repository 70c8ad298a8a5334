// SPDX-License-Identifier: Apache-2.0
#include "s2st/tensor.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace s2st {

namespace {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), values_(element_count(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != element_count(shape_)) {
    throw std::invalid_argument("tensor: " + std::to_string(values_.size()) + " values do not fill shape " +
                                shape_to_string(shape_));
  }
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw std::invalid_argument("tensor: axis " + std::to_string(axis) + " out of range for shape " +
                                shape_to_string(shape_));
  }
  return shape_[axis];
}

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape(*this, other, "tensor +=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  require_same_shape(*this, other, "tensor -=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}

Tensor& Tensor::operator*=(double scale) noexcept {
  for (double& v : values_) v *= scale;
  return *this;
}

Tensor& Tensor::axpy(double scale, const Tensor& other) {
  require_same_shape(*this, other, "tensor axpy");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += scale * other.values_[i];
  return *this;
}

void Tensor::fill(double value) noexcept {
  for (double& v : values_) v = value;
}

bool Tensor::all_finite() const noexcept {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::vector<double> Tensor::channel(std::size_t c) const {
  const std::size_t channels = this->channels();
  if (c >= channels) throw std::invalid_argument("tensor: channel index out of range");
  std::vector<double> out;
  out.reserve(values_.size() / channels);
  for (std::size_t i = c; i < values_.size(); i += channels) out.push_back(values_[i]);
  return out;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(double scale, Tensor a) { return a *= scale; }

void require_same_shape(const Tensor& a, const Tensor& b, const char* context) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(context) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                                shape_to_string(b.shape()));
  }
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

double squared_norm(const Tensor& a) {
  double sum = 0.0;
  for (double v : a.values()) sum += v * v;
  return sum;
}

double l2_norm(const Tensor& a) { return std::sqrt(squared_norm(a)); }

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

double mean(const Tensor& a) {
  if (a.empty()) return 0.0;
  double sum = 0.0;
  for (double v : a.values()) sum += v;
  return sum / static_cast<double>(a.size());
}

std::uint64_t checksum(std::span<const double> values, std::uint64_t seed) {
  std::uint64_t hash = seed;
  for (double v : values) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      hash ^= b;
      hash *= 0x100000001b3ULL;
    }
  }
  return hash;
}

std::string checksum_hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace s2st
