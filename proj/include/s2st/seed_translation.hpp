// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <vector>

#include "s2st/backend.hpp"
#include "s2st/config.hpp"
#include "s2st/diffusion.hpp"
#include "s2st/losses.hpp"

namespace s2st {

struct SeedLossRecord {
  int iteration = 0;
  double appearance = 0.0;
  double structure = 0.0;
  double total = 0.0;
};

struct SeedTranslationResult {
  Latent translated_seed;
  /// One record per iteration, measured before that iteration's update.
  std::vector<SeedLossRecord> loss_history;
  /// Losses of the returned seed.
  SeedLossRecord final_losses;
  /// Predicted-clean trajectory sampled from the returned seed.
  LatentTrajectory generation_trajectory;
  /// Clean latent sampled from the returned seed.
  Latent sampled;
};

struct SeedObjective {
  SeedLossRecord losses;
  /// Gradient of the total loss with respect to the seed.
  Tensor seed_grad;
};

/// Total seed-translation loss of `seed` and its gradient through the full
/// guided sampling chain.
SeedObjective seed_objective(const Latent& seed, const Tensor& source_image, const DomainSpec& domain,
                             const DenoiserBackend& backend, const TranslationConfig& config);

/// Optimizes the seed with Adam so that guided DDIM sampling under the domain
/// condition approaches the domain mean latent while the decoded image keeps
/// the Sobel field of `source_image`. Gradients flow through every sampling
/// step. Throws OptimizationError (timestep -1) on a non-finite loss or
/// gradient.
SeedTranslationResult seed_translate(const Latent& seed, const Tensor& source_image, const DomainSpec& domain,
                                     const DenoiserBackend& backend, const TranslationConfig& config);

/// Columns: iteration,app_loss,str_loss,total
void write_seed_loss_csv(const std::filesystem::path& path, const std::vector<SeedLossRecord>& history);

}  // namespace s2st
