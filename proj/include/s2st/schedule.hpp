// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace s2st {

/// Cumulative-product noise schedule alpha_1..alpha_T plus the DDIM sub-grid
/// used for sampling and inversion. alpha(0) is the clean endpoint and is 1.
class DiffusionSchedule {
 public:
  /// Validates: every alpha in (0,1], non-increasing; grid strictly increasing within 1..T.
  DiffusionSchedule(std::vector<double> alphas, std::vector<int> ddim_timesteps);

  /// betas = linspace(sqrt(beta_start), sqrt(beta_end), T)^2, alphas = cumprod(1 - beta).
  /// With the defaults alpha_T is about 0.0047.
  static DiffusionSchedule scaled_linear(int num_train_timesteps = 1000, int ddim_steps = 20,
                                         double beta_start = 0.00085, double beta_end = 0.012);

  int num_train_timesteps() const noexcept { return static_cast<int>(alphas_.size()); }
  double alpha(int t) const;
  const std::vector<double>& alphas() const noexcept { return alphas_; }
  const std::vector<int>& ddim_timesteps() const noexcept { return grid_; }
  int ddim_steps() const noexcept { return static_cast<int>(grid_.size()); }
  int top_timestep() const noexcept { return grid_.back(); }

  /// True for 0 and for every grid timestep.
  bool on_grid(int t) const;

  /// Same alphas, uniform grid with `steps` entries.
  DiffusionSchedule with_ddim_steps(int steps) const;

  /// Content hash over the alphas and the grid.
  std::string hash() const;

 private:
  std::vector<double> alphas_;
  std::vector<int> grid_;
};

/// floor(i * T / steps) for i = 1..steps; the last entry is always T.
std::vector<int> uniform_ddim_grid(int num_train_timesteps, int steps);

}  // namespace s2st
