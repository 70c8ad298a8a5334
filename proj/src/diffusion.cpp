// SPDX-License-Identifier: Apache-2.0
#include "s2st/diffusion.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "s2st/archive.hpp"
#include "s2st/errors.hpp"

namespace s2st {

namespace {

void require_grid(const DiffusionSchedule& schedule, int t, const char* context) {
  if (!schedule.on_grid(t)) {
    throw std::invalid_argument(std::string(context) + ": timestep " + std::to_string(t) + " is not on the ddim grid");
  }
}

Latent require_finite(Latent latent, const char* context) {
  if (!latent.values.all_finite()) throw NumericalError(std::string(context) + ": non-finite output");
  return latent;
}

/// Descending (t, t_prev) pairs covering the whole grid.
std::vector<std::pair<int, int>> sampling_steps(const DiffusionSchedule& schedule) {
  const auto& grid = schedule.ddim_timesteps();
  std::vector<std::pair<int, int>> steps;
  for (std::size_t i = grid.size(); i-- > 0;) steps.emplace_back(grid[i], i == 0 ? 0 : grid[i - 1]);
  return steps;
}

std::string entry_name(int step) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "z_%04d", step);
  return buf;
}

}  // namespace

const char* to_string(TrajectoryKind kind) {
  return kind == TrajectoryKind::inversion ? "inversion" : "generation-predicted-clean";
}

int LatentTrajectory::step_of(std::size_t i) const {
  if (kind == TrajectoryKind::inversion) return entries.at(i).timestep;
  return predicted_at.at(i);
}

void LatentTrajectory::validate() const {
  if (kind == TrajectoryKind::generation_predicted_clean && predicted_at.size() != entries.size()) {
    throw std::invalid_argument("trajectory: predicted_at length does not match entries");
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (kind == TrajectoryKind::generation_predicted_clean && entries[i].timestep != 0) {
      throw std::invalid_argument("trajectory: generation entries must be predicted clean latents");
    }
    if (i > 0 && step_of(i) >= step_of(i - 1)) {
      throw std::invalid_argument("trajectory: timesteps must strictly decrease");
    }
  }
}

Tensor cfg_noise(const Tensor& eps_null, const Tensor& eps_cond, double omega) {
  require_same_shape(eps_null, eps_cond, "cfg_noise");
  if (!(omega >= 0.0)) throw std::invalid_argument("cfg_noise: omega must be >= 0");
  Tensor out(eps_null.shape());
  const double keep = 1.0 - omega;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = keep * eps_null[i] + omega * eps_cond[i];
  return out;
}

Latent predict_clean(const Latent& z_t, const Tensor& eps, const DiffusionSchedule& schedule, int t) {
  require_same_shape(z_t.values, eps, "predict_clean");
  require_grid(schedule, t, "predict_clean");
  const double alpha = schedule.alpha(t);
  const double root_alpha = std::sqrt(alpha);
  const double root_beta = std::sqrt(1.0 - alpha);
  Latent out{Tensor(z_t.values.shape()), 0};
  for (std::size_t i = 0; i < eps.size(); ++i) out.values[i] = (z_t.values[i] - root_beta * eps[i]) / root_alpha;
  return require_finite(std::move(out), "predict_clean");
}

Latent ddim_step_sample(const Latent& z_t, const Tensor& eps, const DiffusionSchedule& schedule, int t, int t_prev) {
  require_grid(schedule, t, "ddim_step_sample");
  require_grid(schedule, t_prev, "ddim_step_sample");
  if (!(t_prev < t)) throw std::invalid_argument("ddim_step_sample: t_prev must be below t");
  const Latent pred = predict_clean(z_t, eps, schedule, t);
  const double alpha_prev = schedule.alpha(t_prev);
  const double root_alpha = std::sqrt(alpha_prev);
  const double root_beta = std::sqrt(1.0 - alpha_prev);
  Latent out{Tensor(eps.shape()), t_prev};
  for (std::size_t i = 0; i < eps.size(); ++i) out.values[i] = root_alpha * pred.values[i] + root_beta * eps[i];
  return require_finite(std::move(out), "ddim_step_sample");
}

Latent ddim_step_invert(const Latent& z_t, const Tensor& eps, const DiffusionSchedule& schedule, int t, int t_next) {
  require_grid(schedule, t, "ddim_step_invert");
  require_grid(schedule, t_next, "ddim_step_invert");
  if (!(t_next > t)) throw std::invalid_argument("ddim_step_invert: t_next must be above t");
  const Latent pred = predict_clean(z_t, eps, schedule, t);
  const double alpha_next = schedule.alpha(t_next);
  const double root_alpha = std::sqrt(alpha_next);
  const double root_beta = std::sqrt(1.0 - alpha_next);
  Latent out{Tensor(eps.shape()), t_next};
  for (std::size_t i = 0; i < eps.size(); ++i) out.values[i] = root_alpha * pred.values[i] + root_beta * eps[i];
  return require_finite(std::move(out), "ddim_step_invert");
}

StepCoefficients step_coefficients(const DiffusionSchedule& schedule, int t, int t_prev) {
  const double root_alpha = std::sqrt(schedule.alpha(t));
  const double root_beta = std::sqrt(1.0 - schedule.alpha(t));
  const double root_alpha_prev = std::sqrt(schedule.alpha(t_prev));
  const double root_beta_prev = std::sqrt(1.0 - schedule.alpha(t_prev));
  StepCoefficients c{};
  c.pred_z = 1.0 / root_alpha;
  c.pred_eps = -root_beta / root_alpha;
  c.a = root_alpha_prev * c.pred_z;
  c.b = root_alpha_prev * c.pred_eps + root_beta_prev;
  return c;
}

Tensor guided_noise(const DenoiserBackend& backend, const Tensor& x, int t, const Condition& cond,
                    const Condition& uncond, double omega) {
  Tensor eps_cond = backend.predict_noise(x, t, cond);
  if (omega == 1.0) return eps_cond;
  return cfg_noise(backend.predict_noise(x, t, uncond), eps_cond, omega);
}

DiffusionSchedule sampling_schedule(const DenoiserBackend& backend, const TranslationConfig& config) {
  return backend.schedule().with_ddim_steps(config.ddim_steps);
}

SampleResult sample(const Latent& seed, const DenoiserBackend& backend, const Condition& cond,
                    const TranslationConfig& config) {
  DifferentiableSampler sampler(backend, sampling_schedule(backend, config), config.omega,
                                BackpropMemory::checkpointed, config.ddim_steps);
  return sampler.forward(seed, cond, backend.null_condition());
}

SampleResult invert(const Latent& z0, const DenoiserBackend& backend, const Condition& cond,
                    const TranslationConfig& config) {
  if (z0.timestep != 0) throw std::invalid_argument("invert: input latent must be clean (timestep 0)");
  const DiffusionSchedule schedule = sampling_schedule(backend, config);
  const auto& grid = schedule.ddim_timesteps();

  std::vector<Latent> ascending{z0};
  Latent z = z0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const int t = i == 0 ? 0 : grid[i - 1];
    const int t_next = grid[i];
    const Tensor eps = backend.predict_noise(z.values, t_next, cond);
    z = ddim_step_invert(z, eps, schedule, t, t_next);
    ascending.push_back(z);
  }

  SampleResult result;
  result.clean = z;
  result.trajectory.kind = TrajectoryKind::inversion;
  result.trajectory.entries.assign(ascending.rbegin(), ascending.rend());
  result.trajectory.condition_label = cond.label;
  result.trajectory.schedule_hash = schedule.hash();
  return result;
}

DifferentiableSampler::DifferentiableSampler(const DenoiserBackend& backend, DiffusionSchedule schedule, double omega,
                                             BackpropMemory memory, int segment)
    : backend_(backend), schedule_(std::move(schedule)), omega_(omega), memory_(memory), segment_(segment) {
  if (segment_ < 1) throw std::invalid_argument("sampler: checkpoint segment must be >= 1");
  if (!(omega_ >= 0.0)) throw std::invalid_argument("sampler: omega must be >= 0");
}

Tensor DifferentiableSampler::step_forward(const Tensor& z, std::size_t step) const {
  const auto [t, t_prev] = sampling_steps(schedule_)[step];
  const Tensor eps = guided_noise(backend_, z, t, cond_, uncond_, omega_);
  return ddim_step_sample(Latent{z, t}, eps, schedule_, t, t_prev).values;
}

SampleResult DifferentiableSampler::forward(const Latent& seed, const Condition& cond, const Condition& uncond) {
  if (seed.timestep != schedule_.top_timestep()) {
    throw std::invalid_argument("sample: seed timestep " + std::to_string(seed.timestep) +
                                " is not the top grid timestep " + std::to_string(schedule_.top_timestep()));
  }
  cond_ = cond;
  uncond_ = uncond;
  const auto steps = sampling_steps(schedule_);
  states_.assign(steps.size(), Tensor());

  SampleResult result;
  result.trajectory.kind = TrajectoryKind::generation_predicted_clean;
  result.trajectory.condition_label = cond.label;
  result.trajectory.schedule_hash = schedule_.hash();

  Latent z = seed;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto [t, t_prev] = steps[i];
    if (memory_ == BackpropMemory::retain_all || i % static_cast<std::size_t>(segment_) == 0) states_[i] = z.values;
    const Tensor eps = guided_noise(backend_, z.values, t, cond_, uncond_, omega_);
    result.trajectory.entries.push_back(predict_clean(z, eps, schedule_, t));
    result.trajectory.predicted_at.push_back(t);
    z = ddim_step_sample(z, eps, schedule_, t, t_prev);
  }
  result.clean = z;
  result.trajectory.entries.push_back(z);
  result.trajectory.predicted_at.push_back(0);
  has_forward_ = true;
  return result;
}

SampleGradient DifferentiableSampler::backward(const Tensor& grad_clean) const {
  if (!has_forward_) throw std::logic_error("sampler: backward called before forward");
  const auto steps = sampling_steps(schedule_);
  SampleGradient grad;
  grad.condition = Tensor(cond_.embedding.shape());
  grad.null_condition = Tensor(uncond_.embedding.shape());
  Tensor g = grad_clean;

  const std::size_t segment = memory_ == BackpropMemory::retain_all ? steps.size() : static_cast<std::size_t>(segment_);
  std::size_t end = steps.size();
  while (end > 0) {
    const std::size_t begin = ((end - 1) / segment) * segment;
    std::vector<Tensor> local(end - begin);
    local[0] = states_[begin];
    for (std::size_t i = begin + 1; i < end; ++i) {
      local[i - begin] = states_[i].empty() ? step_forward(local[i - begin - 1], i - 1) : states_[i];
    }
    for (std::size_t i = end; i-- > begin;) {
      const auto [t, t_prev] = steps[i];
      const StepCoefficients c = step_coefficients(schedule_, t, t_prev);
      const Tensor& z = local[i - begin];
      const Tensor upstream = c.b * g;
      Tensor next = c.a * g;
      const NoiseVjp cond_vjp = backend_.predict_noise_vjp(z, t, cond_, omega_ * upstream);
      next += cond_vjp.input;
      grad.condition += cond_vjp.condition;
      if (omega_ != 1.0) {
        const NoiseVjp null_vjp = backend_.predict_noise_vjp(z, t, uncond_, (1.0 - omega_) * upstream);
        next += null_vjp.input;
        grad.null_condition += null_vjp.condition;
      }
      g = std::move(next);
    }
    end = begin;
  }
  grad.seed = std::move(g);
  return grad;
}

std::size_t DifferentiableSampler::stored_latents() const {
  std::size_t count = 0;
  for (const auto& s : states_) count += s.empty() ? 0 : 1;
  return count;
}

void save_trajectory(const std::filesystem::path& path, const LatentTrajectory& trajectory) {
  trajectory.validate();
  ArrayArchive archive;
  std::vector<std::int64_t> steps;
  for (std::size_t i = 0; i < trajectory.entries.size(); ++i) {
    const int step = trajectory.step_of(i);
    archive.put(entry_name(step), trajectory.entries[i].values);
    steps.push_back(step);
  }
  archive.put_ints("timesteps", std::move(steps));
  archive.save(path);
  write_metadata(sidecar_path(path), {{"kind", to_string(trajectory.kind)},
                                      {"schedule_hash", trajectory.schedule_hash},
                                      {"condition_label", trajectory.condition_label}});
}

LatentTrajectory load_trajectory(const std::filesystem::path& path) {
  const ArrayArchive archive = ArrayArchive::load(path);
  const Metadata meta = read_metadata(sidecar_path(path));
  LatentTrajectory trajectory;
  const std::string& kind = require_key(meta, "kind", path.string());
  if (kind == to_string(TrajectoryKind::inversion)) {
    trajectory.kind = TrajectoryKind::inversion;
  } else if (kind == to_string(TrajectoryKind::generation_predicted_clean)) {
    trajectory.kind = TrajectoryKind::generation_predicted_clean;
  } else {
    throw std::runtime_error("trajectory: unknown kind '" + kind + "' in " + path.string());
  }
  trajectory.schedule_hash = require_key(meta, "schedule_hash", path.string());
  trajectory.condition_label = require_key(meta, "condition_label", path.string());
  for (std::int64_t step : archive.ints("timesteps")) {
    const int s = static_cast<int>(step);
    const bool inversion = trajectory.kind == TrajectoryKind::inversion;
    trajectory.entries.push_back(Latent{archive.tensor(entry_name(s)), inversion ? s : 0});
    if (!inversion) trajectory.predicted_at.push_back(s);
  }
  trajectory.validate();
  return trajectory;
}

}  // namespace s2st
