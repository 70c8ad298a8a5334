// SPDX-License-Identifier: Apache-2.0
#include "s2st/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "s2st/tensor.hpp"

namespace s2st {

DiffusionSchedule::DiffusionSchedule(std::vector<double> alphas, std::vector<int> ddim_timesteps)
    : alphas_(std::move(alphas)), grid_(std::move(ddim_timesteps)) {
  if (alphas_.empty()) throw std::invalid_argument("schedule: empty alpha table");
  for (std::size_t i = 0; i < alphas_.size(); ++i) {
    const double a = alphas_[i];
    if (!(a > 0.0 && a <= 1.0)) {
      throw std::invalid_argument("schedule: alpha_" + std::to_string(i + 1) + " outside (0,1]");
    }
    if (i > 0 && a > alphas_[i - 1]) {
      throw std::invalid_argument("schedule: alphas must be non-increasing in t");
    }
  }
  if (grid_.empty()) throw std::invalid_argument("schedule: empty ddim grid");
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    if (grid_[i] < 1 || grid_[i] > num_train_timesteps()) {
      throw std::invalid_argument("schedule: ddim timestep " + std::to_string(grid_[i]) + " outside 1..T");
    }
    if (i > 0 && grid_[i] <= grid_[i - 1]) {
      throw std::invalid_argument("schedule: ddim timesteps must be strictly increasing");
    }
  }
}

DiffusionSchedule DiffusionSchedule::scaled_linear(int num_train_timesteps, int ddim_steps, double beta_start,
                                                   double beta_end) {
  if (num_train_timesteps < 1) throw std::invalid_argument("schedule: T must be positive");
  std::vector<double> alphas(static_cast<std::size_t>(num_train_timesteps));
  const double lo = std::sqrt(beta_start);
  const double hi = std::sqrt(beta_end);
  double running = 1.0;
  for (int i = 0; i < num_train_timesteps; ++i) {
    const double frac = num_train_timesteps == 1 ? 0.0 : static_cast<double>(i) / (num_train_timesteps - 1);
    const double root = lo + (hi - lo) * frac;
    running *= 1.0 - root * root;
    alphas[static_cast<std::size_t>(i)] = running;
  }
  return DiffusionSchedule(std::move(alphas), uniform_ddim_grid(num_train_timesteps, ddim_steps));
}

double DiffusionSchedule::alpha(int t) const {
  if (t == 0) return 1.0;
  if (t < 0 || t > num_train_timesteps()) {
    throw std::invalid_argument("schedule: timestep " + std::to_string(t) + " outside 0..T");
  }
  return alphas_[static_cast<std::size_t>(t - 1)];
}

bool DiffusionSchedule::on_grid(int t) const {
  return t == 0 || std::binary_search(grid_.begin(), grid_.end(), t);
}

DiffusionSchedule DiffusionSchedule::with_ddim_steps(int steps) const {
  return DiffusionSchedule(alphas_, uniform_ddim_grid(num_train_timesteps(), steps));
}

std::string DiffusionSchedule::hash() const {
  std::vector<double> grid_as_double(grid_.begin(), grid_.end());
  return checksum_hex(checksum(grid_as_double, checksum(alphas_)));
}

std::vector<int> uniform_ddim_grid(int num_train_timesteps, int steps) {
  if (steps < 1 || steps > num_train_timesteps) {
    throw std::invalid_argument("schedule: ddim step count " + std::to_string(steps) + " must be in 1..T");
  }
  std::vector<int> grid;
  grid.reserve(static_cast<std::size_t>(steps));
  for (int i = 1; i <= steps; ++i) {
    grid.push_back(static_cast<int>((static_cast<long long>(i) * num_train_timesteps) / steps));
  }
  return grid;
}

}  // namespace s2st
