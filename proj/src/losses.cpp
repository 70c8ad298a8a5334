// SPDX-License-Identifier: Apache-2.0
#include "s2st/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "s2st/archive.hpp"

namespace s2st {

namespace {

constexpr double kLuma[3] = {0.299, 0.587, 0.114};

// Rows are dy = -1..1, columns dx = -1..1.
constexpr double kSobelX[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
constexpr double kSobelY[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};

std::size_t clamp_index(long i, std::size_t n) {
  return static_cast<std::size_t>(std::clamp<long>(i, 0, static_cast<long>(n) - 1));
}

void require_image(const Tensor& image, const char* context) {
  if (image.rank() != 3 || image.channels() != 3) {
    throw std::invalid_argument(std::string(context) + ": expected an H x W x 3 image, got " +
                                shape_to_string(image.shape()));
  }
}

void check_histogram_config(const HistogramConfig& config) {
  if (config.bins < 1) throw std::invalid_argument("soft_histogram: bins must be positive");
  if (!(config.hi > config.lo)) throw std::invalid_argument("soft_histogram: empty range");
  if (!(config.effective_bandwidth() > 0.0)) throw std::invalid_argument("soft_histogram: bandwidth must be > 0");
}

/// Softmax weights of one value over the bin centers, plus the logit slopes.
void bin_weights(double v, const HistogramConfig& config, std::vector<double>& weights, std::vector<double>* slopes) {
  const double width = config.bin_width();
  const double h = config.effective_bandwidth();
  const std::size_t bins = static_cast<std::size_t>(config.bins);
  double best = -INFINITY;
  for (std::size_t b = 0; b < bins; ++b) {
    const double u = (v - (config.lo + (static_cast<double>(b) + 0.5) * width)) / h;
    weights[b] = -0.5 * u * u;
    if (slopes) (*slopes)[b] = -u / h;
    best = std::max(best, weights[b]);
  }
  double total = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    weights[b] = std::exp(weights[b] - best);
    total += weights[b];
  }
  for (std::size_t b = 0; b < bins; ++b) weights[b] /= total;
}

void check_eta(std::span<const double> eta, std::size_t channels) {
  if (eta.size() != channels) {
    throw std::invalid_argument("to_appearance_loss: eta has " + std::to_string(eta.size()) + " entries for " +
                                std::to_string(channels) + " channels");
  }
}

std::string example_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "example_%03zu", i);
  return buf;
}

}  // namespace

Tensor luminance(const Tensor& image) {
  require_image(image, "luminance");
  Tensor out = Tensor::hwc(image.height(), image.width(), 1);
  for (std::size_t p = 0; p < out.size(); ++p) {
    out[p] = kLuma[0] * image[3 * p] + kLuma[1] * image[3 * p + 1] + kLuma[2] * image[3 * p + 2];
  }
  return out;
}

Tensor sobel(const Tensor& image) {
  const Tensor lum = luminance(image);
  const std::size_t h = image.height(), w = image.width();
  Tensor out = Tensor::hwc(h, w, 2);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double gx = 0.0, gy = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        const std::size_t sy = clamp_index(static_cast<long>(y) + dy, h);
        for (int dx = -1; dx <= 1; ++dx) {
          const double v = lum.at(sy, clamp_index(static_cast<long>(x) + dx, w), 0);
          gx += kSobelX[dy + 1][dx + 1] * v;
          gy += kSobelY[dy + 1][dx + 1] * v;
        }
      }
      out.at(y, x, 0) = gx;
      out.at(y, x, 1) = gy;
    }
  }
  return out;
}

Tensor sobel_vjp(const Tensor& upstream) {
  if (upstream.rank() != 3 || upstream.channels() != 2) throw std::invalid_argument("sobel_vjp: expected H x W x 2");
  const std::size_t h = upstream.height(), w = upstream.width();
  Tensor lum_grad = Tensor::hwc(h, w, 1);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double ux = upstream.at(y, x, 0), uy = upstream.at(y, x, 1);
      for (int dy = -1; dy <= 1; ++dy) {
        const std::size_t sy = clamp_index(static_cast<long>(y) + dy, h);
        for (int dx = -1; dx <= 1; ++dx) {
          lum_grad.at(sy, clamp_index(static_cast<long>(x) + dx, w), 0) +=
              kSobelX[dy + 1][dx + 1] * ux + kSobelY[dy + 1][dx + 1] * uy;
        }
      }
    }
  }
  Tensor grad = Tensor::hwc(h, w, 3);
  for (std::size_t p = 0; p < lum_grad.size(); ++p) {
    for (std::size_t c = 0; c < 3; ++c) grad[3 * p + c] = kLuma[c] * lum_grad[p];
  }
  return grad;
}

double st_structure_loss(const Tensor& src_grad, const Tensor& gen_image) {
  const Tensor gen_grad = sobel(gen_image);
  require_same_shape(src_grad, gen_grad, "st_structure_loss");
  return squared_norm(gen_grad - src_grad);
}

LossAndGrad st_structure_loss_with_grad(const Tensor& src_grad, const Tensor& gen_image) {
  const Tensor gen_grad = sobel(gen_image);
  require_same_shape(src_grad, gen_grad, "st_structure_loss");
  Tensor diff = gen_grad - src_grad;
  const double value = squared_norm(diff);
  diff *= 2.0;
  return {value, sobel_vjp(diff)};
}

double st_appearance_loss(const Latent& mean_latent, const Latent& gen_latent) {
  require_same_shape(mean_latent.values, gen_latent.values, "st_appearance_loss");
  return squared_norm(gen_latent.values - mean_latent.values);
}

LossAndGrad st_appearance_loss_with_grad(const Latent& mean_latent, const Latent& gen_latent) {
  require_same_shape(mean_latent.values, gen_latent.values, "st_appearance_loss");
  Tensor diff = gen_latent.values - mean_latent.values;
  const double value = squared_norm(diff);
  return {value, 2.0 * std::move(diff)};
}

double to_structure_loss(const Latent& z_star, const Latent& z_inv) { return to_structure_loss_with_grad(z_star, z_inv).value; }

LossAndGrad to_structure_loss_with_grad(const Latent& z_star, const Latent& z_inv) {
  if (z_star.timestep != z_inv.timestep) {
    throw std::invalid_argument("to_structure_loss: timestep mismatch " + std::to_string(z_star.timestep) + " vs " +
                                std::to_string(z_inv.timestep));
  }
  require_same_shape(z_star.values, z_inv.values, "to_structure_loss");
  Tensor diff = z_star.values - z_inv.values;
  const double value = squared_norm(diff);
  return {value, 2.0 * std::move(diff)};
}

std::vector<double> soft_histogram(std::span<const double> values, const HistogramConfig& config) {
  check_histogram_config(config);
  if (values.empty()) throw std::invalid_argument("soft_histogram: empty input");
  const std::size_t bins = static_cast<std::size_t>(config.bins);
  std::vector<double> mass(bins, 0.0), weights(bins);
  for (double v : values) {
    bin_weights(v, config, weights, nullptr);
    for (std::size_t b = 0; b < bins; ++b) mass[b] += weights[b];
  }
  const double inv = 1.0 / static_cast<double>(values.size());
  for (double& m : mass) m *= inv;
  return mass;
}

std::vector<double> soft_histogram_vjp(std::span<const double> values, const HistogramConfig& config,
                                       std::span<const double> upstream) {
  check_histogram_config(config);
  if (values.empty()) throw std::invalid_argument("soft_histogram: empty input");
  const std::size_t bins = static_cast<std::size_t>(config.bins);
  if (upstream.size() != bins) throw std::invalid_argument("soft_histogram_vjp: upstream must have one entry per bin");
  std::vector<double> grad(values.size()), weights(bins), slopes(bins);
  const double inv = 1.0 / static_cast<double>(values.size());
  for (std::size_t j = 0; j < values.size(); ++j) {
    bin_weights(values[j], config, weights, &slopes);
    // d softmax_b / dv = p_b (s_b - sum_k p_k s_k)
    double mean_slope = 0.0;
    for (std::size_t b = 0; b < bins; ++b) mean_slope += weights[b] * slopes[b];
    double g = 0.0;
    for (std::size_t b = 0; b < bins; ++b) g += upstream[b] * weights[b] * (slopes[b] - mean_slope);
    grad[j] = g * inv;
  }
  return grad;
}

double to_appearance_loss(const Latent& pred_clean_star, const Latent& pred_clean_gen, std::span<const double> eta,
                          const HistogramConfig& config) {
  require_same_shape(pred_clean_star.values, pred_clean_gen.values, "to_appearance_loss");
  const std::size_t channels = pred_clean_star.values.channels();
  check_eta(eta, channels);
  double total = 0.0;
  for (std::size_t c = 0; c < channels; ++c) {
    const auto hs = soft_histogram(pred_clean_star.values.channel(c), config);
    const auto hg = soft_histogram(pred_clean_gen.values.channel(c), config);
    double sq = 0.0;
    for (std::size_t b = 0; b < hs.size(); ++b) sq += (hs[b] - hg[b]) * (hs[b] - hg[b]);
    total += eta[c] * sq;
  }
  return total;
}

LossAndGrad to_appearance_loss_with_grad(const Latent& pred_clean_star, const Latent& pred_clean_gen,
                                         std::span<const double> eta, const HistogramConfig& config) {
  require_same_shape(pred_clean_star.values, pred_clean_gen.values, "to_appearance_loss");
  const std::size_t channels = pred_clean_star.values.channels();
  check_eta(eta, channels);
  LossAndGrad out{0.0, Tensor(pred_clean_star.values.shape())};
  for (std::size_t c = 0; c < channels; ++c) {
    const auto star = pred_clean_star.values.channel(c);
    const auto hs = soft_histogram(star, config);
    const auto hg = soft_histogram(pred_clean_gen.values.channel(c), config);
    std::vector<double> upstream(hs.size());
    double sq = 0.0;
    for (std::size_t b = 0; b < hs.size(); ++b) {
      const double d = hs[b] - hg[b];
      sq += d * d;
      upstream[b] = 2.0 * eta[c] * d;
    }
    out.value += eta[c] * sq;
    if (eta[c] == 0.0) continue;
    const auto g = soft_histogram_vjp(star, config, upstream);
    for (std::size_t j = 0; j < g.size(); ++j) out.grad[j * channels + c] = g[j];
  }
  return out;
}

std::vector<double> compute_eta(const std::vector<Latent>& source_examples, const std::vector<Latent>& target_examples) {
  if (source_examples.empty() || target_examples.empty()) {
    throw std::invalid_argument("compute_eta: both example sets must be non-empty");
  }
  const std::size_t channels = source_examples.front().values.channels();
  auto channel_means = [channels](const std::vector<Latent>& set) {
    std::vector<double> means(channels, 0.0);
    for (const Latent& z : set) {
      if (z.values.channels() != channels) throw std::invalid_argument("compute_eta: channel count mismatch");
      const std::size_t pixels = z.values.size() / channels;
      for (std::size_t i = 0; i < z.values.size(); ++i) means[i % channels] += z.values[i] / static_cast<double>(pixels);
    }
    for (double& m : means) m /= static_cast<double>(set.size());
    return means;
  };
  const auto src = channel_means(source_examples);
  const auto tgt = channel_means(target_examples);
  std::vector<double> eta(channels);
  double total = 0.0;
  for (std::size_t c = 0; c < channels; ++c) {
    eta[c] = std::abs(tgt[c] - src[c]);
    total += eta[c];
  }
  if (total < 1e-12) {
    std::fill(eta.begin(), eta.end(), 1.0 / static_cast<double>(channels));
  } else {
    for (double& e : eta) e /= total;
  }
  return eta;
}

Latent mean_latent(const std::vector<Latent>& latents) {
  if (latents.empty()) throw std::invalid_argument("mean_latent: no latents");
  Latent out{Tensor(latents.front().values.shape()), 0};
  for (const Latent& z : latents) out.values += z.values;
  out.values *= 1.0 / static_cast<double>(latents.size());
  return out;
}

void DomainSpec::validate() const {
  if (example_latents.empty()) throw std::invalid_argument("domain spec '" + label + "': no example latents");
  const Latent expected = s2st::mean_latent(example_latents);
  if (expected.values.shape() != mean_latent.values.shape() ||
      max_abs_diff(expected.values, mean_latent.values) > 1e-12) {
    throw std::invalid_argument("domain spec '" + label + "': mean latent does not match the examples");
  }
  if (eta.size() != mean_latent.values.channels()) {
    throw std::invalid_argument("domain spec '" + label + "': eta length does not match latent channels");
  }
  double total = 0.0;
  for (double e : eta) {
    if (!(e >= 0.0)) throw std::invalid_argument("domain spec '" + label + "': negative eta entry");
    total += e;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("domain spec '" + label + "': eta does not sum to 1");
}

DomainSpec build_domain_spec(const std::string& label, const Condition& condition,
                             const std::vector<Tensor>& example_images, const LatentCodec& codec,
                             const std::vector<Tensor>& source_images) {
  if (example_images.empty()) throw std::invalid_argument("build_domain_spec: no example images");
  auto encode_all = [&codec](const std::vector<Tensor>& images) {
    std::vector<Latent> out;
    for (const Tensor& img : images) out.push_back(Latent{codec.encode(img), 0});
    return out;
  };
  DomainSpec spec;
  spec.label = label;
  spec.condition = condition;
  spec.example_latents = encode_all(example_images);
  spec.mean_latent = mean_latent(spec.example_latents);
  const auto sources = source_images.empty() ? spec.example_latents : encode_all(source_images);
  spec.eta = compute_eta(sources, spec.example_latents);
  spec.validate();
  return spec;
}

void save_domain_spec(const std::filesystem::path& path, const DomainSpec& spec) {
  spec.validate();
  ArrayArchive archive;
  for (std::size_t i = 0; i < spec.example_latents.size(); ++i) {
    archive.put(example_name(i), spec.example_latents[i].values);
  }
  archive.put("mean_latent", spec.mean_latent.values);
  archive.put("eta", Tensor({spec.eta.size()}, spec.eta));
  archive.put("condition", spec.condition.embedding);
  archive.save(path);
  write_metadata(sidecar_path(path), {{"label", spec.label},
                                      {"n", std::to_string(spec.example_latents.size())},
                                      {"eta_mode", spec.eta_mode},
                                      {"condition_label", spec.condition.label}});
}

DomainSpec load_domain_spec(const std::filesystem::path& path) {
  const ArrayArchive archive = ArrayArchive::load(path);
  const Metadata meta = read_metadata(sidecar_path(path));
  DomainSpec spec;
  spec.label = require_key(meta, "label", path.string());
  spec.eta_mode = require_key(meta, "eta_mode", path.string());
  const std::size_t n = std::stoul(require_key(meta, "n", path.string()));
  for (std::size_t i = 0; i < n; ++i) spec.example_latents.push_back(Latent{archive.tensor(example_name(i)), 0});
  spec.mean_latent = Latent{archive.tensor("mean_latent"), 0};
  const Tensor& eta = archive.tensor("eta");
  spec.eta.assign(eta.values().begin(), eta.values().end());
  spec.condition = Condition{archive.tensor("condition"), require_key(meta, "condition_label", path.string())};
  spec.validate();
  return spec;
}

}  // namespace s2st
