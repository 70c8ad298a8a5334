// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "s2st/tensor.hpp"

namespace s2st {

struct ToyNetworkShape {
  std::size_t latent_size = 16;
  std::size_t latent_channels = 4;
  std::size_t hidden = 32;
  std::size_t time_dim = 32;
  std::size_t cond_grid = 8;
  std::size_t cond_dim = 8;
  std::vector<int> dilations{1, 2, 4, 2, 1};
};

/// A named matrix inside the flat parameter vector.
struct ParamSlot {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;
};

/// Residual convolutional noise predictor over S x S x C latents.
///
/// Input is the latent plus two coordinate channels. A sinusoidal timestep
/// embedding passes through a two-layer MLP. Each residual block adds a
/// per-block projection of the time embedding and of the nearest-upsampled
/// condition grid, then applies SiLU and a dilated 3x3 convolution. Three
/// learned condition grids (null, day, night) live in the same parameter
/// vector. All activations are smooth, so the map is differentiable
/// everywhere.
class ToyNetwork {
 public:
  explicit ToyNetwork(ToyNetworkShape shape = {});

  const ToyNetworkShape& shape() const noexcept { return shape_; }
  const std::vector<ParamSlot>& slots() const noexcept { return slots_; }
  const ParamSlot& slot(const std::string& name) const;

  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }

  /// Deterministic random initialization.
  void initialize(std::uint64_t seed);

  Shape latent_shape() const { return {shape_.latent_size, shape_.latent_size, shape_.latent_channels}; }
  Shape condition_shape() const { return {shape_.cond_grid, shape_.cond_grid, shape_.cond_dim}; }

  /// Condition grid stored in slot "cond_<name>".
  Tensor stored_condition(const std::string& name) const;

  Tensor predict(const Tensor& x, int t, const Tensor& cond) const;

  struct InputGrad {
    Tensor input;
    Tensor condition;
  };
  /// Gradient of <upstream, predict(x, t, cond)> with respect to x and cond.
  InputGrad vjp(const Tensor& x, int t, const Tensor& cond, const Tensor& upstream) const;

  /// Mean over all elements of (predict - target)^2 for a batch. Adds the
  /// gradient with respect to the parameters into param_grad and returns the
  /// gradient with respect to each condition in cond_grad.
  double mse_loss_and_grad(const std::vector<Tensor>& x, const std::vector<int>& t, const std::vector<Tensor>& cond,
                           const std::vector<Tensor>& target, std::span<double> param_grad,
                           std::vector<Tensor>* cond_grad) const;

  double mse_loss(const std::vector<Tensor>& x, const std::vector<int>& t, const std::vector<Tensor>& cond,
                  const std::vector<Tensor>& target) const;

 private:
  ToyNetworkShape shape_;
  std::vector<ParamSlot> slots_;
  std::vector<double> params_;
};

}  // namespace s2st
