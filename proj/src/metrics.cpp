// SPDX-License-Identifier: Apache-2.0
#include "s2st/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <stdexcept>

#include "s2st/image_io.hpp"
#include "s2st/losses.hpp"

namespace s2st {

namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::vector<double> gaussian_window(std::size_t size, double sigma) {
  std::vector<double> w(size * size);
  const double center = (static_cast<double>(size) - 1.0) / 2.0;
  double total = 0.0;
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double dy = static_cast<double>(y) - center, dx = static_cast<double>(x) - center;
      w[y * size + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      total += w[y * size + x];
    }
  }
  for (double& v : w) v /= total;
  return w;
}

/// Box-average resample of an image onto a grid x grid x 3 lattice.
std::vector<double> box_resample(const Tensor& image, std::size_t grid) {
  std::vector<double> out(grid * grid * 3, 0.0);
  const std::size_t h = image.height(), w = image.width();
  for (std::size_t gy = 0; gy < grid; ++gy) {
    const std::size_t y0 = gy * h / grid, y1 = std::max(y0 + 1, (gy + 1) * h / grid);
    for (std::size_t gx = 0; gx < grid; ++gx) {
      const std::size_t x0 = gx * w / grid, x1 = std::max(x0 + 1, (gx + 1) * w / grid);
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (std::size_t y = y0; y < y1; ++y) {
          for (std::size_t x = x0; x < x1; ++x) acc += image.at(y, x, c);
        }
        out[(gy * grid + gx) * 3 + c] = acc / static_cast<double>((y1 - y0) * (x1 - x0));
      }
    }
  }
  return out;
}

double mean_offdiag(const FeatureSet& s) {
  const std::size_t m = s.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (i != j) acc += kid_kernel(s[i], s[j]);
    }
  }
  return acc / static_cast<double>(m * (m - 1));
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "ssim");
  const Tensor la = luminance(a), lb = luminance(b);
  const std::size_t h = a.height(), w = a.width();
  std::size_t win = std::min<std::size_t>({11, h, w});
  if (win % 2 == 0) --win;
  const auto weights = gaussian_window(win, 1.5);

  double total = 0.0;
  std::size_t windows = 0;
  for (std::size_t y0 = 0; y0 + win <= h; ++y0) {
    for (std::size_t x0 = 0; x0 + win <= w; ++x0) {
      double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
      for (std::size_t dy = 0; dy < win; ++dy) {
        for (std::size_t dx = 0; dx < win; ++dx) {
          const double k = weights[dy * win + dx];
          const double va = la.at(y0 + dy, x0 + dx, 0), vb = lb.at(y0 + dy, x0 + dx, 0);
          mx += k * va;
          my += k * vb;
          xx += k * va * va;
          yy += k * vb * vb;
          xy += k * va * vb;
        }
      }
      const double vx = xx - mx * mx, vy = yy - my * my, cov = xy - mx * my;
      total += ((2 * mx * my + kC1) * (2 * cov + kC2)) / ((mx * mx + my * my + kC1) * (vx + vy + kC2));
      ++windows;
    }
  }
  return total / static_cast<double>(windows);
}

double kid_kernel(const std::vector<double>& x, const std::vector<double>& y) {
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) d += x[i] * y[i];
  const double base = d / static_cast<double>(x.size()) + 1.0;
  return base * base * base;
}

namespace {

/// Sorts feature vectors by content hash, so pairing depends only on the set.
FeatureSet canonical_order(const FeatureSet& set) {
  std::vector<std::pair<std::uint64_t, const std::vector<double>*>> keyed;
  for (const auto& f : set) keyed.emplace_back(checksum(f), &f);
  std::sort(keyed.begin(), keyed.end(), [](const auto& l, const auto& r) {
    return l.first != r.first ? l.first < r.first : *l.second < *r.second;
  });
  FeatureSet out;
  for (const auto& [key, f] : keyed) out.push_back(*f);
  return out;
}

}  // namespace

double kid(const FeatureSet& a, const FeatureSet& b) {
  if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("kid: each set needs at least 2 items");
  const std::size_t dim = a.front().size();
  for (const auto* set : {&a, &b}) {
    for (const auto& f : *set) {
      if (f.size() != dim) throw std::invalid_argument("kid: feature dimensionality mismatch");
    }
  }
  const std::size_t m = a.size(), n = b.size();
  if (m == n) {
    const FeatureSet x = canonical_order(a), y = canonical_order(b);
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        if (i == j) continue;
        acc += kid_kernel(x[i], x[j]) + kid_kernel(y[i], y[j]) - kid_kernel(x[i], y[j]) - kid_kernel(x[j], y[i]);
      }
    }
    return acc / static_cast<double>(m * (m - 1));
  }
  double cross = 0.0;
  for (const auto& x : a) {
    for (const auto& y : b) cross += kid_kernel(x, y);
  }
  return mean_offdiag(a) + mean_offdiag(b) - 2.0 * cross / static_cast<double>(m * n);
}

FeatureEmbedder::FeatureEmbedder(std::uint64_t seed, std::size_t dim, std::size_t grid) : dim_(dim), grid_(grid) {
  const std::size_t inputs = grid_ * grid_ * 3;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(inputs)));
  projection_.resize(dim_ * inputs);
  for (double& w : projection_) w = normal(rng);
}

std::vector<double> FeatureEmbedder::embed(const Tensor& image) const {
  if (image.rank() != 3 || image.channels() != 3) throw std::invalid_argument("embedder: expected H x W x 3 image");
  const auto pixels = box_resample(image, grid_);
  std::vector<double> features(dim_);
  for (std::size_t k = 0; k < dim_; ++k) {
    double acc = 0.0;
    const double* row = projection_.data() + k * pixels.size();
    for (std::size_t i = 0; i < pixels.size(); ++i) acc += row[i] * (pixels[i] - 0.5);
    features[k] = std::tanh(4.0 * acc);
  }
  return features;
}

FeatureSet FeatureEmbedder::embed_all(const std::vector<Tensor>& images) const {
  FeatureSet out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(embed(img));
  return out;
}

double grad_struct_dist(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "grad_struct_dist");
  const Tensor ga = sobel(a), gb = sobel(b);
  return l2_norm(ga - gb) / (std::max(l2_norm(ga), l2_norm(gb)) + 1e-8);
}

MetricsReport evaluate(const std::filesystem::path& outputs_dir, const std::filesystem::path& target_dir,
                       const std::filesystem::path& sources_dir) {
  const auto outputs = list_pngs(outputs_dir);
  const auto targets = list_pngs(target_dir);
  const auto sources = list_pngs(sources_dir);
  if (outputs.empty() || targets.empty() || sources.empty()) throw std::runtime_error("evaluate: empty input directory");

  std::map<std::string, std::filesystem::path> source_by_name;
  for (const auto& p : sources) source_by_name[p.filename().string()] = p;

  MetricsReport report;
  std::vector<Tensor> output_images, target_images;
  for (const auto& p : targets) target_images.push_back(read_png(p));
  for (const auto& p : outputs) {
    output_images.push_back(read_png(p));
    const auto it = source_by_name.find(p.filename().string());
    if (it == source_by_name.end()) {
      report.unpaired.push_back(p.filename().string());
      std::cerr << "warning: no source image pairs with output " << p.filename().string() << ", skipped\n";
      continue;
    }
    const Tensor source = read_png(it->second);
    PairMetrics pair{p.filename().string(), ssim(output_images.back(), source),
                     grad_struct_dist(source, output_images.back())};
    report.ssim += pair.ssim;
    report.grad_struct_dist += pair.grad_struct_dist;
    report.pairs.push_back(pair);
  }
  if (report.pairs.empty()) throw std::runtime_error("evaluate: no output pairs with a source image by filename");

  const FeatureEmbedder embedder;
  report.kid = kid(embedder.embed_all(output_images), embedder.embed_all(target_images));
  report.output_count = outputs.size();
  report.target_count = targets.size();
  report.pair_count = report.pairs.size();
  report.ssim /= static_cast<double>(report.pair_count);
  report.grad_struct_dist /= static_cast<double>(report.pair_count);
  return report;
}

void write_metrics(const std::filesystem::path& dir, const MetricsReport& report) {
  std::filesystem::create_directories(dir);
  const char* header =
      "# KID uses a seeded random-projection embedder and structure distance uses Sobel fields;\n"
      "# values are only comparable with other runs of this tool.\n";
  {
    std::ofstream out(dir / "metrics.txt");
    char buf[64];
    out << header;
    std::snprintf(buf, sizeof(buf), "%.10g", report.kid);
    out << "kid=" << buf << "\n";
    std::snprintf(buf, sizeof(buf), "%.10g", report.ssim);
    out << "ssim=" << buf << "\n";
    std::snprintf(buf, sizeof(buf), "%.10g", report.grad_struct_dist);
    out << "grad_struct_dist=" << buf << "\n";
    out << "output_count=" << report.output_count << "\n";
    out << "target_count=" << report.target_count << "\n";
    out << "pair_count=" << report.pair_count << "\n";
    out << "unpaired_count=" << report.unpaired.size() << "\n";
  }
  std::ofstream csv(dir / "metrics.csv");
  csv << "file,ssim,grad_struct_dist\n";
  for (const auto& p : report.pairs) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%.10g,%.10g", p.ssim, p.grad_struct_dist);
    csv << p.name << "," << buf << "\n";
  }
}

}  // namespace s2st
