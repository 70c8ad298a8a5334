// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

#include "s2st/backend.hpp"
#include "s2st/toy_network.hpp"
#include "s2st/toy_scene.hpp"

namespace s2st {

/// 4x average-pool / bilinear-upsample codec with an affine 3 -> 4 channel
/// map. The map is fitted by PCA-whitening the pooled RGB values (three
/// channels) plus a standardized luminance channel; decoding applies the
/// pseudo-inverse before upsampling.
class ToyCodec final : public LatentCodec {
 public:
  static constexpr std::size_t kFactor = 4;
  static constexpr std::size_t kLatentChannels = 4;

  ToyCodec(std::size_t image_size, std::array<double, 12> projection, std::array<double, 3> offset);

  /// Fits the projection on the pooled pixels of `images`.
  static ToyCodec fit(const std::vector<Tensor>& images);

  Shape image_shape() const override { return {size_, size_, 3}; }
  Shape latent_shape() const override { return {size_ / kFactor, size_ / kFactor, kLatentChannels}; }
  Tensor encode(const Tensor& image) const override;
  Tensor decode(const Tensor& latent) const override;
  Tensor decode_vjp(const Tensor& latent, const Tensor& upstream) const override;

  /// Row-major 4 x 3 map applied to (pooled rgb - offset).
  const std::array<double, 12>& projection() const noexcept { return projection_; }
  const std::array<double, 3>& offset() const noexcept { return offset_; }

 private:
  std::size_t size_;
  std::array<double, 12> projection_;
  std::array<double, 3> offset_;
  std::array<double, 12> inverse_;  // row-major 3 x 4
};

struct ToyTrainingInfo {
  int rng_seed = 0;
  int epochs = 0;
  double final_loss = 0.0;
};

class ToyBackend final : public DenoiserBackend {
 public:
  ToyBackend(ToyNetwork network, ToyCodec codec, DiffusionSchedule schedule, ToyTrainingInfo info);

  std::string architecture_id() const override { return "toy-resconv-v1"; }
  const DiffusionSchedule& schedule() const override { return schedule_; }
  Shape latent_shape() const override { return network_.latent_shape(); }
  Shape condition_shape() const override { return network_.condition_shape(); }
  Condition null_condition() const override;
  /// "" (null), "day" or "night".
  Condition condition(const std::string& label) const override;
  const LatentCodec& codec() const override { return codec_; }

  Tensor predict_noise(const Tensor& x, int t, const Condition& c) const override;
  NoiseVjp predict_noise_vjp(const Tensor& x, int t, const Condition& c, const Tensor& upstream) const override;
  std::uint64_t weights_checksum() const override;

  const ToyNetwork& network() const noexcept { return network_; }
  const ToyCodec& toy_codec() const noexcept { return codec_; }
  const ToyTrainingInfo& info() const noexcept { return info_; }

 private:
  ToyNetwork network_;
  ToyCodec codec_;
  DiffusionSchedule schedule_;
  ToyTrainingInfo info_;
};

struct ToyTrainingOptions {
  ToyNetworkShape network;
  std::size_t batch_size = 16;
  double learning_rate = 2e-3;
  double condition_dropout = 0.15;
  /// Called after every epoch with the epoch index and mean batch loss.
  std::function<void(int, double)> on_epoch;
};

/// Fits the codec on the dataset, then trains the noise predictor with the
/// standard denoising objective and condition dropout. Deterministic given
/// rng_seed. Throws TrainingError naming the epoch on a non-finite loss.
std::unique_ptr<ToyBackend> train_toy_backend(const std::vector<ToyScene>& dataset, int epochs, int rng_seed,
                                              const ToyTrainingOptions& options = {});

/// Mean denoising loss on `scenes` (conditioned on their domain) with timestep
/// and noise draws fixed by `seed`.
double denoising_loss(const ToyBackend& backend, const std::vector<ToyScene>& scenes, std::uint64_t seed,
                      int draws_per_scene = 4);

/// Weights archive plus a metadata sidecar (architecture id, rng_seed, epochs).
void save_toy_backend(const ToyBackend& backend, const std::filesystem::path& path);
std::unique_ptr<ToyBackend> load_toy_backend(const std::filesystem::path& path);

}  // namespace s2st
