// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "s2st/backend.hpp"
#include "s2st/config.hpp"
#include "s2st/schedule.hpp"
#include "s2st/tensor.hpp"

namespace s2st {

/// A latent at a diffusion timestep; timestep 0 is clean (or predicted clean).
struct Latent {
  Tensor values;
  int timestep = 0;
};

enum class TrajectoryKind { inversion, generation_predicted_clean };

const char* to_string(TrajectoryKind kind);

/// Latents ordered from the top timestep down to 0.
///
/// For inversion trajectories entries hold raw z_t. For generation
/// trajectories entry i holds the clean latent predicted at grid step
/// `predicted_at[i]`, and the last entry is the final sample (predicted_at 0).
struct LatentTrajectory {
  TrajectoryKind kind = TrajectoryKind::inversion;
  std::vector<Latent> entries;
  std::vector<int> predicted_at;
  std::string condition_label;
  std::string schedule_hash;

  /// Step tag of entry i: the timestep for inversion, predicted_at for generation.
  int step_of(std::size_t i) const;
  /// Throws std::invalid_argument unless step tags strictly decrease.
  void validate() const;
};

/// eps_null + omega * (eps_cond - eps_null), evaluated as (1-omega)*eps_null +
/// omega*eps_cond so that omega in {0,1} returns a branch exactly.
Tensor cfg_noise(const Tensor& eps_null, const Tensor& eps_cond, double omega);

/// (z_t - sqrt(1-alpha_t) eps) / sqrt(alpha_t), tagged timestep 0.
Latent predict_clean(const Latent& z_t, const Tensor& eps, const DiffusionSchedule& schedule, int t);

/// Deterministic DDIM step from t down to t_prev (t_prev may be 0).
Latent ddim_step_sample(const Latent& z_t, const Tensor& eps, const DiffusionSchedule& schedule, int t, int t_prev);

/// Deterministic DDIM inversion step from t up to t_next.
Latent ddim_step_invert(const Latent& z_t, const Tensor& eps, const DiffusionSchedule& schedule, int t, int t_next);

/// Coefficients of z_prev = a * z_t + b * eps for one sampling step.
struct StepCoefficients {
  double a;
  double b;
  /// d pred_clean / d eps
  double pred_eps;
  /// d pred_clean / d z_t
  double pred_z;
};
StepCoefficients step_coefficients(const DiffusionSchedule& schedule, int t, int t_prev);

/// Guided noise for one step. omega == 1 skips the null branch.
Tensor guided_noise(const DenoiserBackend& backend, const Tensor& x, int t, const Condition& cond,
                    const Condition& uncond, double omega);

/// Backend schedule re-gridded to config.ddim_steps.
DiffusionSchedule sampling_schedule(const DenoiserBackend& backend, const TranslationConfig& config);

struct SampleResult {
  Latent clean;
  LatentTrajectory trajectory;
};

/// Full deterministic DDIM sampling with guidance config.omega against the
/// backend's null condition. The seed must sit at the top grid timestep.
SampleResult sample(const Latent& seed, const DenoiserBackend& backend, const Condition& cond,
                    const TranslationConfig& config);

/// DDIM inversion of a clean latent with guidance fixed to 1. Each step
/// evaluates the noise at the destination timestep. Records every z_t,
/// endpoints included, ordered from the top down.
SampleResult invert(const Latent& z0, const DenoiserBackend& backend, const Condition& cond,
                    const TranslationConfig& config);

struct SampleGradient {
  Tensor seed;
  Tensor condition;
  Tensor null_condition;
};

/// Guided DDIM sampler that can backpropagate from the clean output to the
/// seed and both condition embeddings. In checkpointed mode only every
/// `segment`-th latent is kept and segments are re-run during backward.
class DifferentiableSampler {
 public:
  DifferentiableSampler(const DenoiserBackend& backend, DiffusionSchedule schedule, double omega,
                        BackpropMemory memory = BackpropMemory::retain_all, int segment = 5);

  SampleResult forward(const Latent& seed, const Condition& cond, const Condition& uncond);

  /// Gradient of <grad_clean, z_0> for the most recent forward call.
  SampleGradient backward(const Tensor& grad_clean) const;

  /// Latents currently held for the backward pass.
  std::size_t stored_latents() const;

 private:
  Tensor step_forward(const Tensor& z, std::size_t step) const;

  const DenoiserBackend& backend_;
  DiffusionSchedule schedule_;
  double omega_;
  BackpropMemory memory_;
  int segment_;
  Condition cond_;
  Condition uncond_;
  /// Index i holds z before step i (descending grid order); empty slots are recomputed.
  std::vector<Tensor> states_;
  bool has_forward_ = false;
};

void save_trajectory(const std::filesystem::path& path, const LatentTrajectory& trajectory);
LatentTrajectory load_trajectory(const std::filesystem::path& path);

}  // namespace s2st
