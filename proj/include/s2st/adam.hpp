// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace s2st {

/// Adaptive-moment optimizer over a flat parameter vector. Moments start at
/// zero and are bias-corrected.
class Adam {
 public:
  explicit Adam(std::size_t size, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8);

  /// params -= update(grad)
  void step(std::span<double> params, std::span<const double> grad);
  void reset();

  double learning_rate() const noexcept { return lr_; }
  void set_learning_rate(double lr) noexcept { lr_ = lr; }
  std::size_t steps() const noexcept { return steps_; }

 private:
  double lr_, beta1_, beta2_, epsilon_;
  std::size_t steps_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace s2st
