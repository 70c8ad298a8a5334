// SPDX-License-Identifier: Apache-2.0
#include "s2st/toy_backend.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "s2st/adam.hpp"
#include "s2st/archive.hpp"
#include "s2st/errors.hpp"

namespace s2st {

namespace {

constexpr double kLuma[3] = {0.299, 0.587, 0.114};
constexpr const char* kArchitectureId = "toy-resconv-v1";

/// Source index pair and weight for each output sample of a 4x bilinear
/// upsample with half-pixel centres and clamped borders.
struct Tap {
  std::size_t i0, i1;
  double w;
};

std::vector<Tap> upsample_taps(std::size_t src, std::size_t factor) {
  std::vector<Tap> taps(src * factor);
  for (std::size_t o = 0; o < taps.size(); ++o) {
    const double pos = std::clamp((static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5, 0.0,
                                  static_cast<double>(src - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(pos));
    taps[o] = {i0, std::min(i0 + 1, src - 1), pos - static_cast<double>(i0)};
  }
  return taps;
}

Tensor average_pool(const Tensor& image, std::size_t factor) {
  const std::size_t s = image.height() / factor;
  Tensor out = Tensor::hwc(s, s, image.channels());
  const double norm = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t y = 0; y < image.height(); ++y) {
    for (std::size_t x = 0; x < image.width(); ++x) {
      for (std::size_t c = 0; c < image.channels(); ++c) out.at(y / factor, x / factor, c) += norm * image.at(y, x, c);
    }
  }
  return out;
}

Tensor bilinear_upsample(const Tensor& small, std::size_t factor) {
  const auto taps = upsample_taps(small.height(), factor);
  const std::size_t n = taps.size(), ch = small.channels();
  Tensor out = Tensor::hwc(n, n, ch);
  for (std::size_t y = 0; y < n; ++y) {
    const Tap& ty = taps[y];
    for (std::size_t x = 0; x < n; ++x) {
      const Tap& tx = taps[x];
      for (std::size_t c = 0; c < ch; ++c) {
        const double top = (1 - tx.w) * small.at(ty.i0, tx.i0, c) + tx.w * small.at(ty.i0, tx.i1, c);
        const double bottom = (1 - tx.w) * small.at(ty.i1, tx.i0, c) + tx.w * small.at(ty.i1, tx.i1, c);
        out.at(y, x, c) = (1 - ty.w) * top + ty.w * bottom;
      }
    }
  }
  return out;
}

Tensor bilinear_upsample_adjoint(const Tensor& big, std::size_t factor) {
  const std::size_t s = big.height() / factor, ch = big.channels();
  const auto taps = upsample_taps(s, factor);
  Tensor out = Tensor::hwc(s, s, ch);
  for (std::size_t y = 0; y < big.height(); ++y) {
    const Tap& ty = taps[y];
    for (std::size_t x = 0; x < big.width(); ++x) {
      const Tap& tx = taps[x];
      for (std::size_t c = 0; c < ch; ++c) {
        const double g = big.at(y, x, c);
        out.at(ty.i0, tx.i0, c) += (1 - ty.w) * (1 - tx.w) * g;
        out.at(ty.i0, tx.i1, c) += (1 - ty.w) * tx.w * g;
        out.at(ty.i1, tx.i0, c) += ty.w * (1 - tx.w) * g;
        out.at(ty.i1, tx.i1, c) += ty.w * tx.w * g;
      }
    }
  }
  return out;
}

void check_image(const Tensor& image, std::size_t size, const char* context) {
  if (image.shape() != Shape{size, size, 3}) {
    throw std::invalid_argument(std::string(context) + ": expected " + shape_to_string({size, size, 3}) + " image, got " +
                                shape_to_string(image.shape()));
  }
}

std::vector<int> to_int_vector(const std::vector<std::int64_t>& v) { return {v.begin(), v.end()}; }

}  // namespace

ToyCodec::ToyCodec(std::size_t image_size, std::array<double, 12> projection, std::array<double, 3> offset)
    : size_(image_size), projection_(projection), offset_(offset) {
  if (image_size == 0 || image_size % kFactor != 0) {
    throw std::invalid_argument("toy codec: image size must be a positive multiple of 4");
  }
  const Eigen::Map<const Eigen::Matrix<double, 4, 3, Eigen::RowMajor>> p(projection_.data());
  const Eigen::Matrix3d gram = p.transpose() * p;
  if (std::abs(gram.determinant()) < 1e-12) throw std::invalid_argument("toy codec: projection is rank deficient");
  const Eigen::Matrix<double, 3, 4, Eigen::RowMajor> inv = gram.inverse() * p.transpose();
  std::copy(inv.data(), inv.data() + 12, inverse_.begin());
}

ToyCodec ToyCodec::fit(const std::vector<Tensor>& images) {
  if (images.empty()) throw std::invalid_argument("toy codec: no images to fit");
  const std::size_t size = images.front().height();
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  Eigen::Matrix3d outer = Eigen::Matrix3d::Zero();
  double count = 0.0;
  for (const auto& img : images) {
    check_image(img, size, "toy codec");
    const Tensor pooled = average_pool(img, kFactor);
    for (std::size_t p = 0; p < pooled.height() * pooled.width(); ++p) {
      const Eigen::Vector3d v(pooled[3 * p], pooled[3 * p + 1], pooled[3 * p + 2]);
      sum += v;
      outer += v * v.transpose();
      count += 1.0;
    }
  }
  const Eigen::Vector3d mean = sum / count;
  const Eigen::Matrix3d cov = outer / count - mean * mean.transpose();
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);

  std::array<double, 12> projection{};
  for (int i = 0; i < 3; ++i) {
    // Descending eigenvalue order; sign fixed so the largest component is positive.
    const int col = 2 - i;
    Eigen::Vector3d v = eig.eigenvectors().col(col);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    const double scale = 1.0 / std::sqrt(std::max(eig.eigenvalues()(col), 1e-8));
    for (int j = 0; j < 3; ++j) projection[static_cast<std::size_t>(i * 3 + j)] = scale * v(j);
  }
  const Eigen::Vector3d luma(kLuma[0], kLuma[1], kLuma[2]);
  const double luma_scale = 1.0 / std::sqrt(std::max(luma.dot(cov * luma), 1e-8));
  for (int j = 0; j < 3; ++j) projection[static_cast<std::size_t>(9 + j)] = luma_scale * kLuma[j];
  return ToyCodec(size, projection, {mean(0), mean(1), mean(2)});
}

Tensor ToyCodec::encode(const Tensor& image) const {
  check_image(image, size_, "toy codec encode");
  const Tensor pooled = average_pool(image, kFactor);
  Tensor out(latent_shape());
  for (std::size_t p = 0; p < pooled.height() * pooled.width(); ++p) {
    for (std::size_t c = 0; c < kLatentChannels; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < 3; ++j) acc += projection_[c * 3 + j] * (pooled[3 * p + j] - offset_[j]);
      out[p * kLatentChannels + c] = acc;
    }
  }
  return out;
}

Tensor ToyCodec::decode(const Tensor& latent) const {
  if (latent.shape() != latent_shape()) throw std::invalid_argument("toy codec decode: latent shape mismatch");
  const std::size_t s = latent.height();
  Tensor small = Tensor::hwc(s, s, 3);
  for (std::size_t p = 0; p < s * s; ++p) {
    for (std::size_t j = 0; j < 3; ++j) {
      double acc = offset_[j];
      for (std::size_t c = 0; c < kLatentChannels; ++c) acc += inverse_[j * 4 + c] * latent[p * kLatentChannels + c];
      small[p * 3 + j] = acc;
    }
  }
  return bilinear_upsample(small, kFactor);
}

Tensor ToyCodec::decode_vjp(const Tensor& latent, const Tensor& upstream) const {
  if (latent.shape() != latent_shape()) throw std::invalid_argument("toy codec decode_vjp: latent shape mismatch");
  check_image(upstream, size_, "toy codec decode_vjp");
  const Tensor small = bilinear_upsample_adjoint(upstream, kFactor);
  Tensor out(latent_shape());
  for (std::size_t p = 0; p < small.height() * small.width(); ++p) {
    for (std::size_t c = 0; c < kLatentChannels; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < 3; ++j) acc += inverse_[j * 4 + c] * small[p * 3 + j];
      out[p * kLatentChannels + c] = acc;
    }
  }
  return out;
}

ToyBackend::ToyBackend(ToyNetwork network, ToyCodec codec, DiffusionSchedule schedule, ToyTrainingInfo info)
    : network_(std::move(network)), codec_(std::move(codec)), schedule_(std::move(schedule)), info_(info) {
  if (codec_.latent_shape() != network_.latent_shape()) {
    throw std::invalid_argument("toy backend: codec latent shape " + shape_to_string(codec_.latent_shape()) +
                                " does not match network " + shape_to_string(network_.latent_shape()));
  }
}

Condition ToyBackend::null_condition() const { return {network_.stored_condition("null"), ""}; }

Condition ToyBackend::condition(const std::string& label) const {
  if (label.empty()) return null_condition();
  if (label == "day" || label == "night") return {network_.stored_condition(label), label};
  throw std::invalid_argument("toy backend: unknown condition label '" + label + "' (expected day or night)");
}

Tensor ToyBackend::predict_noise(const Tensor& x, int t, const Condition& c) const {
  check_inputs(x, t, c);
  return network_.predict(x, t, c.embedding);
}

NoiseVjp ToyBackend::predict_noise_vjp(const Tensor& x, int t, const Condition& c, const Tensor& upstream) const {
  check_inputs(x, t, c);
  require_same_shape(x, upstream, "toy backend vjp");
  auto g = network_.vjp(x, t, c.embedding, upstream);
  return {std::move(g.input), std::move(g.condition)};
}

std::uint64_t ToyBackend::weights_checksum() const {
  std::uint64_t h = checksum(network_.params());
  h = checksum(codec_.projection(), h);
  return checksum(codec_.offset(), h);
}

std::unique_ptr<ToyBackend> train_toy_backend(const std::vector<ToyScene>& dataset, int epochs, int rng_seed,
                                              const ToyTrainingOptions& options) {
  if (dataset.empty()) throw std::invalid_argument("train_toy_backend: empty dataset");
  if (epochs < 0) throw std::invalid_argument("train_toy_backend: epochs must be non-negative");
  if (options.batch_size == 0) throw std::invalid_argument("train_toy_backend: batch size must be positive");
  const bool has_day = std::any_of(dataset.begin(), dataset.end(), [](const auto& s) { return s.domain == Domain::day; });
  const bool has_night =
      std::any_of(dataset.begin(), dataset.end(), [](const auto& s) { return s.domain == Domain::night; });
  if (!has_day || !has_night) throw std::invalid_argument("train_toy_backend: dataset must cover both domains");

  std::vector<Tensor> images;
  for (const auto& s : dataset) images.push_back(s.image);
  ToyCodec codec = ToyCodec::fit(images);

  ToyNetworkShape shape = options.network;
  shape.latent_size = codec.latent_shape()[0];
  shape.latent_channels = ToyCodec::kLatentChannels;
  ToyNetwork network(shape);
  network.initialize(static_cast<std::uint64_t>(rng_seed) * 0x9E3779B97F4A7C15ULL + 1);
  DiffusionSchedule schedule = DiffusionSchedule::scaled_linear();

  std::vector<Tensor> latents;
  for (const auto& img : images) latents.push_back(codec.encode(img));

  const std::size_t cond_size = network.slot("cond_null").rows * network.slot("cond_null").cols;
  auto cond_offset = [&](const std::string& name) { return network.slot("cond_" + name).offset; };

  std::mt19937_64 rng(static_cast<std::uint64_t>(rng_seed) ^ 0xD1B54A32D192ED03ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Adam adam(network.parameter_count(), options.learning_rate);
  std::vector<double> grad(network.parameter_count());
  std::vector<std::size_t> order(dataset.size());
  const std::size_t batches_per_epoch = (dataset.size() + options.batch_size - 1) / options.batch_size;
  const double total_steps = static_cast<double>(batches_per_epoch) * epochs;
  const int T = schedule.num_train_timesteps();

  double epoch_loss = 0.0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      std::vector<Tensor> x, cond, target;
      std::vector<int> t;
      std::vector<std::string> labels;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t idx = order[k];
        const int step = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(T));
        const double a = schedule.alpha(step);
        Tensor eps(latents[idx].shape());
        for (double& v : eps.values()) v = normal(rng);
        Tensor noisy = std::sqrt(a) * latents[idx];
        noisy.axpy(std::sqrt(1.0 - a), eps);
        const std::string label = unit(rng) < options.condition_dropout ? "null" : to_string(dataset[idx].domain);
        x.push_back(std::move(noisy));
        t.push_back(step);
        cond.push_back(network.stored_condition(label));
        target.push_back(std::move(eps));
        labels.push_back(label);
      }
      std::fill(grad.begin(), grad.end(), 0.0);
      std::vector<Tensor> cond_grad;
      const double loss = network.mse_loss_and_grad(x, t, cond, target, grad, &cond_grad);
      if (!std::isfinite(loss)) {
        throw TrainingError("train_toy_backend: non-finite loss at epoch " + std::to_string(epoch), epoch);
      }
      for (std::size_t b = 0; b < labels.size(); ++b) {
        const std::size_t off = cond_offset(labels[b]);
        for (std::size_t i = 0; i < cond_size; ++i) grad[off + i] += cond_grad[b][i];
      }
      double norm = 0.0;
      for (double g : grad) norm += g * g;
      norm = std::sqrt(norm);
      if (norm > 1.0) {
        for (double& g : grad) g /= norm;
      }
      const double progress = static_cast<double>(adam.steps()) / std::max(total_steps, 1.0);
      adam.set_learning_rate(options.learning_rate * (0.1 + 0.45 * (1.0 + std::cos(std::numbers::pi * progress))));
      adam.step(network.params(), grad);
      epoch_loss += loss * static_cast<double>(end - start);
    }
    epoch_loss /= static_cast<double>(dataset.size());
    if (!std::isfinite(epoch_loss)) {
      throw TrainingError("train_toy_backend: non-finite loss at epoch " + std::to_string(epoch), epoch);
    }
    if (options.on_epoch) options.on_epoch(epoch, epoch_loss);
  }
  return std::make_unique<ToyBackend>(std::move(network), std::move(codec), std::move(schedule),
                                      ToyTrainingInfo{rng_seed, epochs, epoch_loss});
}

double denoising_loss(const ToyBackend& backend, const std::vector<ToyScene>& scenes, std::uint64_t seed,
                      int draws_per_scene) {
  if (scenes.empty() || draws_per_scene <= 0) throw std::invalid_argument("denoising_loss: nothing to evaluate");
  const auto& schedule = backend.schedule();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Tensor> x, cond, target;
  std::vector<int> t;
  for (const auto& scene : scenes) {
    const Tensor z = backend.codec().encode(scene.image);
    const Tensor c = backend.condition(to_string(scene.domain)).embedding;
    for (int d = 0; d < draws_per_scene; ++d) {
      const int step = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(schedule.num_train_timesteps()));
      const double a = schedule.alpha(step);
      Tensor eps(z.shape());
      for (double& v : eps.values()) v = normal(rng);
      Tensor noisy = std::sqrt(a) * z;
      noisy.axpy(std::sqrt(1.0 - a), eps);
      x.push_back(std::move(noisy));
      t.push_back(step);
      cond.push_back(c);
      target.push_back(std::move(eps));
    }
  }
  return backend.network().mse_loss(x, t, cond, target);
}

void save_toy_backend(const ToyBackend& backend, const std::filesystem::path& path) {
  const ToyNetwork& net = backend.network();
  ArrayArchive archive;
  for (const auto& slot : net.slots()) {
    const auto begin = net.params().begin() + static_cast<long>(slot.offset);
    archive.put("param/" + slot.name,
                Tensor({slot.rows, slot.cols}, std::vector<double>(begin, begin + static_cast<long>(slot.rows * slot.cols))));
  }
  const auto& codec = backend.toy_codec();
  archive.put("codec/projection", Tensor({4, 3}, {codec.projection().begin(), codec.projection().end()}));
  archive.put("codec/offset", Tensor({3}, {codec.offset().begin(), codec.offset().end()}));
  archive.put("schedule/alphas", Tensor({backend.schedule().alphas().size()}, backend.schedule().alphas()));
  const auto& grid = backend.schedule().ddim_timesteps();
  archive.put_ints("schedule/ddim_timesteps", {grid.begin(), grid.end()});
  const auto& dil = net.shape().dilations;
  archive.put_ints("network/dilations", {dil.begin(), dil.end()});
  archive.save(path);

  const auto& s = net.shape();
  write_metadata(sidecar_path(path), {
                                         {"architecture_id", backend.architecture_id()},
                                         {"rng_seed", std::to_string(backend.info().rng_seed)},
                                         {"epochs", std::to_string(backend.info().epochs)},
                                         {"image_size", std::to_string(codec.image_shape()[0])},
                                         {"latent_size", std::to_string(s.latent_size)},
                                         {"latent_channels", std::to_string(s.latent_channels)},
                                         {"hidden", std::to_string(s.hidden)},
                                         {"time_dim", std::to_string(s.time_dim)},
                                         {"cond_grid", std::to_string(s.cond_grid)},
                                         {"cond_dim", std::to_string(s.cond_dim)},
                                         {"weights_checksum", checksum_hex(backend.weights_checksum())},
                                     });
}

std::unique_ptr<ToyBackend> load_toy_backend(const std::filesystem::path& path) {
  const Metadata meta = read_metadata(sidecar_path(path));
  const std::string source = sidecar_path(path).string();
  if (require_key(meta, "architecture_id", source) != kArchitectureId) {
    throw std::runtime_error(path.string() + ": unsupported architecture '" + meta.at("architecture_id") + "'");
  }
  const ArrayArchive archive = ArrayArchive::load(path);
  auto size_key = [&](const char* key) { return static_cast<std::size_t>(std::stoull(require_key(meta, key, source))); };

  ToyNetworkShape shape;
  shape.latent_size = size_key("latent_size");
  shape.latent_channels = size_key("latent_channels");
  shape.hidden = size_key("hidden");
  shape.time_dim = size_key("time_dim");
  shape.cond_grid = size_key("cond_grid");
  shape.cond_dim = size_key("cond_dim");
  shape.dilations = to_int_vector(archive.ints("network/dilations"));
  ToyNetwork network(shape);
  for (const auto& slot : network.slots()) {
    const Tensor& t = archive.tensor("param/" + slot.name);
    if (t.shape() != Shape{slot.rows, slot.cols}) {
      throw std::runtime_error(path.string() + ": parameter '" + slot.name + "' has shape " + shape_to_string(t.shape()));
    }
    std::copy(t.values().begin(), t.values().end(), network.params().begin() + static_cast<long>(slot.offset));
  }

  const Tensor& proj = archive.tensor("codec/projection");
  const Tensor& off = archive.tensor("codec/offset");
  if (proj.size() != 12 || off.size() != 3) throw std::runtime_error(path.string() + ": malformed codec entries");
  std::array<double, 12> projection{};
  std::array<double, 3> offset{};
  std::copy(proj.values().begin(), proj.values().end(), projection.begin());
  std::copy(off.values().begin(), off.values().end(), offset.begin());
  ToyCodec codec(size_key("image_size"), projection, offset);

  const auto& alphas = archive.tensor("schedule/alphas").storage();
  DiffusionSchedule schedule(alphas, to_int_vector(archive.ints("schedule/ddim_timesteps")));
  ToyTrainingInfo info{std::stoi(require_key(meta, "rng_seed", source)), std::stoi(require_key(meta, "epochs", source)),
                       0.0};
  auto backend = std::make_unique<ToyBackend>(std::move(network), std::move(codec), std::move(schedule), info);
  if (meta.contains("weights_checksum") && meta.at("weights_checksum") != checksum_hex(backend->weights_checksum())) {
    throw std::runtime_error(path.string() + ": weights checksum does not match the sidecar");
  }
  return backend;
}

}  // namespace s2st
