// SPDX-License-Identifier: Apache-2.0
#include "s2st/seed_translation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "s2st/adam.hpp"
#include "s2st/errors.hpp"

namespace s2st {

namespace {

struct Evaluation {
  SeedLossRecord losses;
  Tensor grad_clean;
};

Evaluation evaluate_clean(const Latent& clean, const Tensor& source_grad, const DomainSpec& domain,
                          const DenoiserBackend& backend, const TranslationConfig& config, int iteration) {
  const Tensor image = backend.codec().decode(clean.values);
  const LossAndGrad app = st_appearance_loss_with_grad(domain.mean_latent, clean);
  const LossAndGrad str = st_structure_loss_with_grad(source_grad, image);
  Evaluation e;
  e.losses = {iteration, app.value, str.value, config.lambda_app_st * app.value + config.lambda_str_st * str.value};
  e.grad_clean = config.lambda_app_st * app.grad;
  e.grad_clean.axpy(config.lambda_str_st, backend.codec().decode_vjp(clean.values, str.grad));
  return e;
}

}  // namespace

SeedObjective seed_objective(const Latent& seed, const Tensor& source_image, const DomainSpec& domain,
                             const DenoiserBackend& backend, const TranslationConfig& config) {
  config.validate();
  DifferentiableSampler sampler(backend, sampling_schedule(backend, config), config.omega, config.memory,
                                config.checkpoint_segment);
  const SampleResult sampled = sampler.forward(seed, domain.condition, backend.null_condition());
  const Evaluation e = evaluate_clean(sampled.clean, sobel(source_image), domain, backend, config, 0);
  return {e.losses, sampler.backward(e.grad_clean).seed};
}

SeedTranslationResult seed_translate(const Latent& seed, const Tensor& source_image, const DomainSpec& domain,
                                     const DenoiserBackend& backend, const TranslationConfig& config) {
  config.validate();
  if (seed.values.shape() != backend.latent_shape()) {
    throw std::invalid_argument("seed_translate: seed shape " + shape_to_string(seed.values.shape()) +
                                " does not match backend latent shape " + shape_to_string(backend.latent_shape()));
  }
  if (source_image.shape() != backend.codec().image_shape()) {
    throw std::invalid_argument("seed_translate: source image shape " + shape_to_string(source_image.shape()) +
                                " does not match codec image shape " + shape_to_string(backend.codec().image_shape()));
  }
  if (domain.mean_latent.values.shape() != backend.latent_shape()) {
    throw std::invalid_argument("seed_translate: domain mean latent shape does not match the backend");
  }

  const Tensor source_grad = sobel(source_image);
  DifferentiableSampler sampler(backend, sampling_schedule(backend, config), config.omega, config.memory,
                                config.checkpoint_segment);
  const Condition uncond = backend.null_condition();

  SeedTranslationResult result;
  Latent z = seed;
  Adam adam(z.values.size(), config.lr_st);
  for (int it = 0; it < config.n_st; ++it) {
    const SampleResult sampled = sampler.forward(z, domain.condition, uncond);
    const Evaluation e = evaluate_clean(sampled.clean, source_grad, domain, backend, config, it);
    if (!std::isfinite(e.losses.total)) {
      throw OptimizationError("seed_translate: non-finite loss at iteration " + std::to_string(it), -1, it);
    }
    result.loss_history.push_back(e.losses);
    const SampleGradient g = sampler.backward(e.grad_clean);
    if (!g.seed.all_finite()) {
      throw OptimizationError("seed_translate: non-finite gradient at iteration " + std::to_string(it), -1, it);
    }
    adam.step(z.values.values(), g.seed.values());
  }

  SampleResult final_sample = sampler.forward(z, domain.condition, uncond);
  result.final_losses = evaluate_clean(final_sample.clean, source_grad, domain, backend, config, config.n_st).losses;
  result.translated_seed = std::move(z);
  result.generation_trajectory = std::move(final_sample.trajectory);
  result.sampled = std::move(final_sample.clean);
  return result;
}

void write_seed_loss_csv(const std::filesystem::path& path, const std::vector<SeedLossRecord>& history) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "iteration,app_loss,str_loss,total\n";
  char buf[160];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.12g,%.12g,%.12g\n", r.iteration, r.appearance, r.structure, r.total);
    out << buf;
  }
}

}  // namespace s2st
