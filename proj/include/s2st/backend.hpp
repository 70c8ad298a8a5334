// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "s2st/schedule.hpp"
#include "s2st/tensor.hpp"

namespace s2st {

/// Conditioning signal for the denoiser. The embedding is opaque outside the
/// backend that declared its shape.
struct Condition {
  Tensor embedding;
  std::string label;
};

/// Vector-Jacobian product of the noise predictor: the gradient of
/// <upstream, eps(x, t, c)> with respect to x and to the condition embedding.
struct NoiseVjp {
  Tensor input;
  Tensor condition;
};

/// Image <-> latent autoencoder pair. Images are HWC in [0,1] with 3 channels.
class LatentCodec {
 public:
  virtual ~LatentCodec() = default;

  virtual Shape image_shape() const = 0;
  virtual Shape latent_shape() const = 0;
  virtual Tensor encode(const Tensor& image) const = 0;
  virtual Tensor decode(const Tensor& latent) const = 0;
  /// Gradient of <upstream, decode(latent)> with respect to latent.
  virtual Tensor decode_vjp(const Tensor& latent, const Tensor& upstream) const = 0;
};

/// The noise predictor eps_theta(x_t, t, c) together with its schedule,
/// condition space and codec. Implementations are immutable after
/// construction and safe to share read-only across threads.
class DenoiserBackend {
 public:
  virtual ~DenoiserBackend() = default;

  virtual std::string architecture_id() const = 0;
  virtual const DiffusionSchedule& schedule() const = 0;
  virtual Shape latent_shape() const = 0;
  virtual Shape condition_shape() const = 0;
  /// The empty-prompt embedding used by classifier-free guidance.
  virtual Condition null_condition() const = 0;
  /// Domain condition by label; throws std::invalid_argument for unknown labels.
  virtual Condition condition(const std::string& label) const = 0;
  virtual const LatentCodec& codec() const = 0;

  virtual Tensor predict_noise(const Tensor& x, int t, const Condition& c) const = 0;
  virtual NoiseVjp predict_noise_vjp(const Tensor& x, int t, const Condition& c, const Tensor& upstream) const = 0;

  /// Checksum over every weight; equal before and after any translation call.
  virtual std::uint64_t weights_checksum() const = 0;

 protected:
  /// Shape checks shared by implementations.
  void check_inputs(const Tensor& x, int t, const Condition& c) const;
};

}  // namespace s2st
