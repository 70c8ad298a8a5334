// SPDX-License-Identifier: Apache-2.0
#include "s2st/trajectory_optimization.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "s2st/adam.hpp"
#include "s2st/archive.hpp"
#include "s2st/errors.hpp"

namespace s2st {

namespace {

std::string embedding_name(int t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "embedding_%04d", t);
  return buf;
}

void check_trajectories(const LatentTrajectory& inversion, const LatentTrajectory& generation,
                        const Latent& translated_seed, const DiffusionSchedule& schedule) {
  const auto& grid = schedule.ddim_timesteps();
  const std::size_t expected = grid.size() + 1;
  if (inversion.kind != TrajectoryKind::inversion) {
    throw std::invalid_argument("trajectory_optimize: first trajectory is not an inversion trajectory");
  }
  if (generation.kind != TrajectoryKind::generation_predicted_clean) {
    throw std::invalid_argument("trajectory_optimize: second trajectory is not a generation trajectory");
  }
  if (inversion.entries.size() != expected || generation.entries.size() != expected) {
    throw std::invalid_argument("trajectory_optimize: trajectories hold " + std::to_string(inversion.entries.size()) +
                                " and " + std::to_string(generation.entries.size()) + " entries, expected " +
                                std::to_string(expected) + " for " + std::to_string(grid.size()) + " steps");
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const int t = grid[grid.size() - 1 - i];
    if (inversion.step_of(i) != t || generation.step_of(i) != t) {
      throw std::invalid_argument("trajectory_optimize: trajectory timesteps do not follow the sampling grid");
    }
  }
  if (translated_seed.timestep != schedule.top_timestep()) {
    throw std::invalid_argument("trajectory_optimize: seed timestep " + std::to_string(translated_seed.timestep) +
                                " is not the top grid timestep");
  }
}

}  // namespace

GuidedStep ddim_step_guided(const Latent& z_t, int t, int t_prev, const Condition& cond, const Condition& uncond,
                            const DenoiserBackend& backend, const DiffusionSchedule& schedule, double omega) {
  const Tensor eps = guided_noise(backend, z_t.values, t, cond, uncond, omega);
  return {predict_clean(z_t, eps, schedule, t), ddim_step_sample(z_t, eps, schedule, t, t_prev)};
}

TrajectoryOptimizationResult trajectory_optimize(const LatentTrajectory& inversion, const LatentTrajectory& generation,
                                                 const Latent& translated_seed, const DomainSpec& domain,
                                                 const DenoiserBackend& backend, const TranslationConfig& config) {
  config.validate();
  const DiffusionSchedule schedule = sampling_schedule(backend, config);
  check_trajectories(inversion, generation, translated_seed, schedule);
  if (domain.eta.size() != backend.latent_shape()[2]) {
    throw std::invalid_argument("trajectory_optimize: eta length does not match latent channels");
  }

  const auto& grid = schedule.ddim_timesteps();
  const std::size_t steps = grid.size();
  const double omega = config.omega;

  TrajectoryOptimizationResult result;
  result.optimized_embeddings.init_mode = config.to_init;
  Condition embedding = backend.null_condition();
  Latent z = translated_seed;

  for (std::size_t i = 0; i < steps; ++i) {
    const int t = grid[steps - 1 - i];
    const int t_prev = i + 1 < steps ? grid[steps - 2 - i] : 0;
    const StepCoefficients coef = step_coefficients(schedule, t, t_prev);
    const Latent& target_prev = inversion.entries[i + 1];
    const Latent& gen_pred = generation.entries[i];
    if (config.to_init == EmbeddingInit::null_text) embedding = backend.null_condition();

    const Tensor eps_cond = backend.predict_noise(z.values, t, domain.condition);
    Adam adam(embedding.embedding.size(), config.lr_to);
    double previous_total = 0.0;
    for (int k = 0; k < config.n_to; ++k) {
      const Tensor eps_null = backend.predict_noise(z.values, t, embedding);
      const Tensor eps = cfg_noise(eps_null, eps_cond, omega);
      const Latent pred = predict_clean(z, eps, schedule, t);
      const Latent z_prev = ddim_step_sample(z, eps, schedule, t, t_prev);

      const LossAndGrad app = to_appearance_loss_with_grad(pred, gen_pred, domain.eta, config.hist);
      const LossAndGrad str = to_structure_loss_with_grad(z_prev, target_prev);
      const double total = config.lambda_app_to * app.value + config.lambda_str_to * str.value;
      if (!std::isfinite(total)) {
        throw OptimizationError("trajectory_optimize: non-finite loss at t=" + std::to_string(t) + ", iteration " +
                                    std::to_string(k),
                                t, k);
      }
      result.per_step_losses.push_back({t, k, app.value, str.value});

      if (omega != 1.0) {
        Tensor grad_eps = (coef.pred_eps * config.lambda_app_to) * app.grad;
        grad_eps.axpy(coef.b * config.lambda_str_to, str.grad);
        const NoiseVjp vjp = backend.predict_noise_vjp(z.values, t, embedding, (1.0 - omega) * grad_eps);
        if (!vjp.condition.all_finite()) {
          throw OptimizationError("trajectory_optimize: non-finite gradient at t=" + std::to_string(t) +
                                      ", iteration " + std::to_string(k),
                                  t, k);
        }
        adam.step(embedding.embedding.values(), vjp.condition.values());
      }
      if (k > 0 && config.to_early_stop > 0.0 && std::abs(previous_total - total) < config.to_early_stop) break;
      previous_total = total;
    }

    z = ddim_step_guided(z, t, t_prev, domain.condition, embedding, backend, schedule, omega).z_prev;
    result.optimized_embeddings.embeddings.push_back(embedding);
    result.optimized_embeddings.timesteps.push_back(t);
  }

  result.final_latent = z;
  result.output_image = backend.codec().decode(z.values);
  return result;
}

void write_step_loss_csv(const std::filesystem::path& path, const std::vector<StepLossRecord>& losses) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "t,inner_iter,app_loss,str_loss\n";
  char buf[160];
  for (const auto& r : losses) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.12g,%.12g\n", r.timestep, r.inner_iteration, r.appearance, r.structure);
    out << buf;
  }
}

void save_embedding_schedule(const std::filesystem::path& path, const NullEmbeddingSchedule& schedule) {
  if (schedule.embeddings.size() != schedule.timesteps.size()) {
    throw std::invalid_argument("save_embedding_schedule: embeddings and timesteps differ in length");
  }
  ArrayArchive archive;
  for (std::size_t i = 0; i < schedule.embeddings.size(); ++i) {
    archive.put(embedding_name(schedule.timesteps[i]), schedule.embeddings[i].embedding);
  }
  archive.put_ints("timesteps", {schedule.timesteps.begin(), schedule.timesteps.end()});
  archive.save(path);
  write_metadata(sidecar_path(path),
                 {{"init_mode", schedule.init_mode == EmbeddingInit::null_text ? "null-text" : "previous-step"},
                  {"count", std::to_string(schedule.embeddings.size())}});
}

NullEmbeddingSchedule load_embedding_schedule(const std::filesystem::path& path) {
  const ArrayArchive archive = ArrayArchive::load(path);
  const Metadata meta = read_metadata(sidecar_path(path));
  NullEmbeddingSchedule schedule;
  schedule.init_mode =
      require_key(meta, "init_mode", path.string()) == "null-text" ? EmbeddingInit::null_text : EmbeddingInit::previous_step;
  for (const std::int64_t t : archive.ints("timesteps")) {
    schedule.timesteps.push_back(static_cast<int>(t));
    schedule.embeddings.push_back({archive.tensor(embedding_name(static_cast<int>(t))), ""});
  }
  return schedule;
}

}  // namespace s2st
