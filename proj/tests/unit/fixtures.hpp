// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>

#include "s2st/analytic_backend.hpp"
#include "s2st/toy_backend.hpp"
#include "s2st/toy_scene.hpp"

namespace s2st::test {

inline Tensor random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(shape);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

inline Tensor gaussian_tensor(const Shape& shape, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, scale);
  Tensor t(shape);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

/// Analytic backend on size x size x channels latents with "day"/"night" offsets.
inline std::unique_ptr<AnalyticGaussianBackend> analytic_fixture(std::size_t size = 8, std::size_t channels = 4,
                                                                 double sigma = 0.5, int steps = 20,
                                                                 std::uint64_t seed = 1) {
  const Tensor mu = random_tensor({size, size, channels}, seed, 0.2, 0.8);
  std::map<std::string, Tensor> conditions;
  conditions["day"] = Tensor({channels}, 0.1);
  conditions["night"] = Tensor({channels}, -0.2);
  return analytic_gaussian_backend(mu, sigma, DiffusionSchedule::scaled_linear(1000, steps), conditions);
}

/// Untrained toy backend: random weights, codec fitted on a few scenes.
inline std::unique_ptr<ToyBackend> untrained_toy(std::uint64_t seed = 3) {
  std::vector<Tensor> images;
  for (int i = 0; i < 4; ++i) {
    images.push_back(make_scene(100 + i, Domain::day).image);
    images.push_back(make_scene(100 + i, Domain::night).image);
  }
  ToyNetwork network;
  network.initialize(seed);
  return std::make_unique<ToyBackend>(std::move(network), ToyCodec::fit(images), DiffusionSchedule::scaled_linear(),
                                      ToyTrainingInfo{static_cast<int>(seed), 0, 0.0});
}

/// Small trained toy backend shared by tests in one binary.
inline const ToyBackend& small_trained_toy() {
  static const std::unique_ptr<ToyBackend> backend = [] {
    std::vector<ToyScene> data = generate_toy_dataset(16, Domain::day, 0);
    const auto night = generate_toy_dataset(16, Domain::night, 0);
    data.insert(data.end(), night.begin(), night.end());
    return train_toy_backend(data, 25, 7);
  }();
  return *backend;
}

/// Central difference of f along direction d.
inline double directional_fd(const std::function<double(const Tensor&)>& f, const Tensor& x, const Tensor& d,
                             double h = 1e-4) {
  Tensor plus = x;
  plus.axpy(h, d);
  Tensor minus = x;
  minus.axpy(-h, d);
  return (f(plus) - f(minus)) / (2.0 * h);
}

inline double relative_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}); }

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("s2st_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace s2st::test
