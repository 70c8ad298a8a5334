// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "s2st/tensor.hpp"

namespace s2st {

using FeatureSet = std::vector<std::vector<double>>;

/// SSIM on luminance with an 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2,
/// C2 = 0.03^2, averaged over all fully-contained windows. Images smaller than
/// the window use the largest odd window that fits.
double ssim(const Tensor& a, const Tensor& b);

/// Polynomial kernel (x.y/d + 1)^3.
double kid_kernel(const std::vector<double>& x, const std::vector<double>& y);

/// Unbiased squared MMD with the cubic polynomial kernel. Equal-size sets use
/// the paired U-statistic with both sets in content-hash order, so the value
/// depends only on the two sets and is exactly 0 for identical ones. Unequal
/// sizes use the estimator with the full cross term.
double kid(const FeatureSet& a, const FeatureSet& b);

/// Fixed seeded image embedder standing in for Inception features: box-resample
/// to 16x16x3, centre, multiply by a Gaussian random matrix, apply tanh.
class FeatureEmbedder {
 public:
  explicit FeatureEmbedder(std::uint64_t seed = 0x5eedf00dULL, std::size_t dim = 64, std::size_t grid = 16);

  std::vector<double> embed(const Tensor& image) const;
  FeatureSet embed_all(const std::vector<Tensor>& images) const;
  std::size_t dim() const noexcept { return dim_; }

 private:
  std::size_t dim_;
  std::size_t grid_;
  std::vector<double> projection_;
};

/// ||sobel(a) - sobel(b)|| / (max(||sobel(a)||, ||sobel(b)||) + 1e-8).
double grad_struct_dist(const Tensor& a, const Tensor& b);

struct PairMetrics {
  std::string name;
  double ssim = 0.0;
  double grad_struct_dist = 0.0;
};

struct MetricsReport {
  double kid = 0.0;
  double ssim = 0.0;
  double grad_struct_dist = 0.0;
  std::size_t output_count = 0;
  std::size_t target_count = 0;
  std::size_t pair_count = 0;
  std::vector<PairMetrics> pairs;
  std::vector<std::string> unpaired;
};

/// KID(outputs, target set), mean SSIM and mean grad_struct_dist of each output
/// against the source with the same filename. Unpaired outputs are skipped
/// with a warning; an error is raised when nothing pairs.
MetricsReport evaluate(const std::filesystem::path& outputs_dir, const std::filesystem::path& target_dir,
                       const std::filesystem::path& sources_dir);

/// Writes metrics.txt (key=value) and metrics.csv (one row per pair) into dir.
void write_metrics(const std::filesystem::path& dir, const MetricsReport& report);

}  // namespace s2st
