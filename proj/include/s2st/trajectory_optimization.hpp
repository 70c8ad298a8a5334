// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <vector>

#include "s2st/backend.hpp"
#include "s2st/config.hpp"
#include "s2st/diffusion.hpp"
#include "s2st/losses.hpp"

namespace s2st {

struct GuidedStep {
  Latent pred_clean;
  Latent z_prev;
};

/// One guided DDIM step with eps = cfg_noise(eps(z, t, uncond), eps(z, t, cond), omega).
GuidedStep ddim_step_guided(const Latent& z_t, int t, int t_prev, const Condition& cond, const Condition& uncond,
                            const DenoiserBackend& backend, const DiffusionSchedule& schedule, double omega);

/// Optimized null embeddings, one per sampling step, ordered from the top timestep down.
struct NullEmbeddingSchedule {
  std::vector<Condition> embeddings;
  std::vector<int> timesteps;
  EmbeddingInit init_mode = EmbeddingInit::previous_step;
};

struct StepLossRecord {
  int timestep = 0;
  int inner_iteration = 0;
  double appearance = 0.0;
  double structure = 0.0;
};

struct TrajectoryOptimizationResult {
  Latent final_latent;
  NullEmbeddingSchedule optimized_embeddings;
  std::vector<StepLossRecord> per_step_losses;
  Tensor output_image;
};

/// Samples from the translated seed while optimizing a per-timestep null
/// embedding with Adam: at each step the guided prediction is pulled toward
/// the source inversion latent (structure) and the predicted clean latent
/// keeps the per-channel histograms of the seed-translation trajectory
/// (appearance). After the inner loop the step is re-run once with the final
/// embedding. Throws std::invalid_argument on trajectory/grid mismatch and
/// OptimizationError (timestep, inner iteration) on non-finite values.
TrajectoryOptimizationResult trajectory_optimize(const LatentTrajectory& inversion, const LatentTrajectory& generation,
                                                 const Latent& translated_seed, const DomainSpec& domain,
                                                 const DenoiserBackend& backend, const TranslationConfig& config);

/// Columns: t,inner_iter,app_loss,str_loss
void write_step_loss_csv(const std::filesystem::path& path, const std::vector<StepLossRecord>& losses);

/// Named-array archive with one "embedding_<t>" entry per timestep.
void save_embedding_schedule(const std::filesystem::path& path, const NullEmbeddingSchedule& schedule);
NullEmbeddingSchedule load_embedding_schedule(const std::filesystem::path& path);

}  // namespace s2st
