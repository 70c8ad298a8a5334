// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "s2st/backend.hpp"
#include "s2st/config.hpp"
#include "s2st/diffusion.hpp"
#include "s2st/tensor.hpp"

namespace s2st {

struct LossAndGrad {
  double value = 0.0;
  Tensor grad;
};

/// Luminance 0.299 R + 0.587 G + 0.114 B as an H x W x 1 tensor.
Tensor luminance(const Tensor& image);

/// 3x3 Sobel responses of the luminance with replicate-padded borders.
/// Output is H x W x 2: channel 0 horizontal (d/dx), channel 1 vertical (d/dy).
Tensor sobel(const Tensor& image);

/// Adjoint of sobel(): maps an H x W x 2 cotangent to an H x W x 3 image gradient.
Tensor sobel_vjp(const Tensor& upstream);

/// ||src_grad - sobel(gen_image)||^2, summed.
double st_structure_loss(const Tensor& src_grad, const Tensor& gen_image);
LossAndGrad st_structure_loss_with_grad(const Tensor& src_grad, const Tensor& gen_image);

/// ||mean_latent - gen_latent||^2, summed. Gradient is with respect to gen_latent.
double st_appearance_loss(const Latent& mean_latent, const Latent& gen_latent);
LossAndGrad st_appearance_loss_with_grad(const Latent& mean_latent, const Latent& gen_latent);

/// ||z_star - z_inv||^2, summed. Both latents must carry the same timestep.
double to_structure_loss(const Latent& z_star, const Latent& z_inv);
LossAndGrad to_structure_loss_with_grad(const Latent& z_star, const Latent& z_inv);

/// Gaussian-kernel soft histogram. Each value spreads unit mass over the bins
/// with weights softmax_b(-((v - center_b) / bandwidth)^2 / 2); the result is
/// averaged over values and sums to 1.
std::vector<double> soft_histogram(std::span<const double> values, const HistogramConfig& config);

/// Gradient of <upstream, soft_histogram(values)> with respect to each value.
std::vector<double> soft_histogram_vjp(std::span<const double> values, const HistogramConfig& config,
                                       std::span<const double> upstream);

/// sum_i eta_i * ||h(star channel i) - h(gen channel i)||^2 with per-channel
/// histograms over spatial positions. Gradient is with respect to pred_clean_star.
double to_appearance_loss(const Latent& pred_clean_star, const Latent& pred_clean_gen, std::span<const double> eta,
                          const HistogramConfig& config);
LossAndGrad to_appearance_loss_with_grad(const Latent& pred_clean_star, const Latent& pred_clean_gen,
                                         std::span<const double> eta, const HistogramConfig& config);

/// Channel weights from the absolute gap between per-channel means of the two
/// example sets, normalized to sum to 1; uniform when the gaps vanish.
std::vector<double> compute_eta(const std::vector<Latent>& source_examples, const std::vector<Latent>& target_examples);

/// Everything the translators need about a target domain.
struct DomainSpec {
  std::string label;
  Condition condition;
  std::vector<Latent> example_latents;
  Latent mean_latent;
  std::vector<double> eta;
  std::string eta_mode = "mean-abs-diff";

  /// Recomputes the mean and checks eta (non-negative, sums to 1 within 1e-9).
  void validate() const;
};

/// Elementwise mean of the latents.
Latent mean_latent(const std::vector<Latent>& latents);

DomainSpec build_domain_spec(const std::string& label, const Condition& condition,
                             const std::vector<Tensor>& example_images, const LatentCodec& codec,
                             const std::vector<Tensor>& source_images);

void save_domain_spec(const std::filesystem::path& path, const DomainSpec& spec);
DomainSpec load_domain_spec(const std::filesystem::path& path);

}  // namespace s2st
