// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace s2st {

/// Raised when an arithmetic result leaves the finite range.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by the seed/trajectory optimizers when a loss or gradient is not finite.
class OptimizationError : public std::runtime_error {
 public:
  OptimizationError(const std::string& what, int timestep, int iteration)
      : std::runtime_error(what), timestep_(timestep), iteration_(iteration) {}

  /// Diffusion timestep being optimized, or -1 for seed translation.
  int timestep() const noexcept { return timestep_; }
  int iteration() const noexcept { return iteration_; }

 private:
  int timestep_;
  int iteration_;
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, int epoch) : std::runtime_error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace s2st
