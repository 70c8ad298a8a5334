// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <memory>
#include <string>

#include "s2st/backend.hpp"

namespace s2st {

/// Image <-> latent map used by the analytic backend: latent channels 0..2
/// are the RGB values, every further channel is the luminance. Decoding
/// drops the extra channels, so decode(encode(img)) == img exactly.
class RgbLuminanceCodec final : public LatentCodec {
 public:
  RgbLuminanceCodec(std::size_t size, std::size_t latent_channels);

  Shape image_shape() const override { return {size_, size_, 3}; }
  Shape latent_shape() const override { return {size_, size_, channels_}; }
  Tensor encode(const Tensor& image) const override;
  Tensor decode(const Tensor& latent) const override;
  Tensor decode_vjp(const Tensor& latent, const Tensor& upstream) const override;

 private:
  std::size_t size_;
  std::size_t channels_;
};

/// Exact noise predictor for data distributed as N(mu_c, sigma^2 I), where
/// mu_c is mu shifted per channel by the condition embedding (length C; the
/// null condition is all zeros). The posterior mean of x_0 given x_t is
///   m = (sqrt(a) sigma^2 x_t + (1-a) mu_c) / (a sigma^2 + 1 - a)
/// and eps = (x_t - sqrt(a) m) / sqrt(1-a).
class AnalyticGaussianBackend final : public DenoiserBackend {
 public:
  AnalyticGaussianBackend(Tensor mu, double sigma, DiffusionSchedule schedule,
                          std::map<std::string, Tensor> conditions = {});

  std::string architecture_id() const override { return "analytic-gaussian"; }
  const DiffusionSchedule& schedule() const override { return schedule_; }
  Shape latent_shape() const override { return mu_.shape(); }
  Shape condition_shape() const override { return {mu_.channels()}; }
  Condition null_condition() const override;
  Condition condition(const std::string& label) const override;
  const LatentCodec& codec() const override { return codec_; }

  Tensor predict_noise(const Tensor& x, int t, const Condition& c) const override;
  NoiseVjp predict_noise_vjp(const Tensor& x, int t, const Condition& c, const Tensor& upstream) const override;
  std::uint64_t weights_checksum() const override;

  const Tensor& mu() const noexcept { return mu_; }
  double sigma() const noexcept { return sigma_; }

  /// Posterior mean m(x_t) for condition c.
  Tensor posterior_mean(const Tensor& x, int t, const Condition& c) const;

 private:
  /// Returns alpha_t after rejecting alpha_t == 1.
  double checked_alpha(int t) const;

  Tensor mu_;
  double sigma_;
  DiffusionSchedule schedule_;
  std::map<std::string, Tensor> conditions_;
  RgbLuminanceCodec codec_;
};

std::unique_ptr<AnalyticGaussianBackend> analytic_gaussian_backend(const Tensor& mu, double sigma,
                                                                   const DiffusionSchedule& schedule,
                                                                   std::map<std::string, Tensor> conditions = {});

}  // namespace s2st
