// SPDX-License-Identifier: Apache-2.0
#include "s2st/analytic_backend.hpp"

#include <cmath>
#include <stdexcept>

namespace s2st {

namespace {

constexpr double kLumaR = 0.299;
constexpr double kLumaG = 0.587;
constexpr double kLumaB = 0.114;

}  // namespace

RgbLuminanceCodec::RgbLuminanceCodec(std::size_t size, std::size_t latent_channels)
    : size_(size), channels_(latent_channels) {
  if (channels_ < 3) throw std::invalid_argument("rgb-luminance codec: needs at least 3 latent channels");
}

Tensor RgbLuminanceCodec::encode(const Tensor& image) const {
  if (image.shape() != image_shape()) throw std::invalid_argument("rgb-luminance codec: bad image shape");
  Tensor latent(latent_shape());
  for (std::size_t y = 0; y < size_; ++y) {
    for (std::size_t x = 0; x < size_; ++x) {
      const double r = image.at(y, x, 0), g = image.at(y, x, 1), b = image.at(y, x, 2);
      latent.at(y, x, 0) = r;
      latent.at(y, x, 1) = g;
      latent.at(y, x, 2) = b;
      for (std::size_t c = 3; c < channels_; ++c) latent.at(y, x, c) = kLumaR * r + kLumaG * g + kLumaB * b;
    }
  }
  return latent;
}

Tensor RgbLuminanceCodec::decode(const Tensor& latent) const {
  if (latent.shape() != latent_shape()) throw std::invalid_argument("rgb-luminance codec: bad latent shape");
  Tensor image(image_shape());
  for (std::size_t y = 0; y < size_; ++y) {
    for (std::size_t x = 0; x < size_; ++x) {
      for (std::size_t c = 0; c < 3; ++c) image.at(y, x, c) = latent.at(y, x, c);
    }
  }
  return image;
}

Tensor RgbLuminanceCodec::decode_vjp(const Tensor& latent, const Tensor& upstream) const {
  if (latent.shape() != latent_shape() || upstream.shape() != image_shape()) {
    throw std::invalid_argument("rgb-luminance codec: bad vjp shapes");
  }
  Tensor grad(latent_shape());
  for (std::size_t y = 0; y < size_; ++y) {
    for (std::size_t x = 0; x < size_; ++x) {
      for (std::size_t c = 0; c < 3; ++c) grad.at(y, x, c) = upstream.at(y, x, c);
    }
  }
  return grad;
}

AnalyticGaussianBackend::AnalyticGaussianBackend(Tensor mu, double sigma, DiffusionSchedule schedule,
                                                 std::map<std::string, Tensor> conditions)
    : mu_(std::move(mu)),
      sigma_(sigma),
      schedule_(std::move(schedule)),
      conditions_(std::move(conditions)),
      codec_(mu_.height(), mu_.channels()) {
  if (!(sigma_ >= 0.0)) throw std::invalid_argument("analytic backend: sigma must be >= 0");
  if (mu_.rank() != 3 || mu_.height() != mu_.width()) {
    throw std::invalid_argument("analytic backend: mu must be S x S x C");
  }
  for (const auto& [label, offset] : conditions_) {
    if (offset.shape() != condition_shape()) {
      throw std::invalid_argument("analytic backend: condition '" + label + "' has the wrong shape");
    }
  }
}

Condition AnalyticGaussianBackend::null_condition() const { return Condition{Tensor(condition_shape()), ""}; }

Condition AnalyticGaussianBackend::condition(const std::string& label) const {
  if (label.empty()) return null_condition();
  const auto it = conditions_.find(label);
  if (it == conditions_.end()) throw std::invalid_argument("analytic backend: unknown condition '" + label + "'");
  return Condition{it->second, label};
}

double AnalyticGaussianBackend::checked_alpha(int t) const {
  const double alpha = schedule_.alpha(t);
  if (alpha >= 1.0) {
    throw std::invalid_argument("analytic backend: alpha_t == 1 at t=" + std::to_string(t) +
                                " leaves the noise undefined; exclude it from the grid");
  }
  return alpha;
}

Tensor AnalyticGaussianBackend::posterior_mean(const Tensor& x, int t, const Condition& c) const {
  check_inputs(x, t, c);
  const double alpha = schedule_.alpha(t);
  const double root_alpha = std::sqrt(alpha);
  const double var = sigma_ * sigma_;
  const double denom = alpha * var + 1.0 - alpha;
  const std::size_t channels = mu_.channels();
  Tensor m(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double mean = mu_[i] + c.embedding[i % channels];
    m[i] = (root_alpha * var * x[i] + (1.0 - alpha) * mean) / denom;
  }
  return m;
}

Tensor AnalyticGaussianBackend::predict_noise(const Tensor& x, int t, const Condition& c) const {
  check_inputs(x, t, c);
  const double alpha = checked_alpha(t);
  const double root_alpha = std::sqrt(alpha);
  const double root_beta = std::sqrt(1.0 - alpha);
  const double denom = alpha * sigma_ * sigma_ + 1.0 - alpha;
  const std::size_t channels = mu_.channels();
  // (x - sqrt(a) m) / sqrt(1-a) simplifies to sqrt(1-a) (x - sqrt(a) mu_c) / denom.
  Tensor eps(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double mean = mu_[i] + c.embedding[i % channels];
    eps[i] = root_beta * (x[i] - root_alpha * mean) / denom;
  }
  return eps;
}

NoiseVjp AnalyticGaussianBackend::predict_noise_vjp(const Tensor& x, int t, const Condition& c,
                                                    const Tensor& upstream) const {
  check_inputs(x, t, c);
  require_same_shape(x, upstream, "analytic backend vjp");
  const double alpha = checked_alpha(t);
  const double denom = alpha * sigma_ * sigma_ + 1.0 - alpha;
  const double d_input = std::sqrt(1.0 - alpha) / denom;
  const double d_mean = -std::sqrt(1.0 - alpha) * std::sqrt(alpha) / denom;
  const std::size_t channels = mu_.channels();
  NoiseVjp vjp{Tensor(x.shape()), Tensor(condition_shape())};
  for (std::size_t i = 0; i < x.size(); ++i) {
    vjp.input[i] = d_input * upstream[i];
    vjp.condition[i % channels] += d_mean * upstream[i];
  }
  return vjp;
}

std::uint64_t AnalyticGaussianBackend::weights_checksum() const {
  std::uint64_t h = checksum(mu_.values());
  const double s = sigma_;
  h = checksum(std::span<const double>(&s, 1), h);
  for (const auto& [label, offset] : conditions_) h = checksum(offset.values(), h);
  return h;
}

std::unique_ptr<AnalyticGaussianBackend> analytic_gaussian_backend(const Tensor& mu, double sigma,
                                                                   const DiffusionSchedule& schedule,
                                                                   std::map<std::string, Tensor> conditions) {
  return std::make_unique<AnalyticGaussianBackend>(mu, sigma, schedule, std::move(conditions));
}

}  // namespace s2st
