// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "fixtures.hpp"
#include "s2st/losses.hpp"

using namespace s2st;
using namespace s2st::test;

namespace {

// Dense 3x3 correlation with clamped borders, written independently.
std::vector<double> dense_sobel(const Tensor& image, int axis) {
  static const double kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  const int h = static_cast<int>(image.height()), w = static_cast<int>(image.width());
  auto lum = [&](int y, int x) {
    y = std::clamp(y, 0, h - 1);
    x = std::clamp(x, 0, w - 1);
    return 0.299 * image.at(y, x, 0) + 0.587 * image.at(y, x, 1) + 0.114 * image.at(y, x, 2);
  };
  std::vector<double> out(h * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) acc += (axis == 0 ? kx[i][j] : kx[j][i]) * lum(y + i - 1, x + j - 1);
      }
      out[y * w + x] = acc;
    }
  }
  return out;
}

std::vector<double> oracle_histogram(const std::vector<double>& values, int bins, double lo, double hi, double bw) {
  const double width = (hi - lo) / bins;
  std::vector<double> mass(bins, 0.0);
  for (const double v : values) {
    std::vector<double> w(bins);
    double total = 0.0;
    for (int b = 0; b < bins; ++b) {
      const double c = lo + (b + 0.5) * width;
      w[b] = std::exp(-0.5 * ((v - c) / bw) * ((v - c) / bw));
      total += w[b];
    }
    for (int b = 0; b < bins; ++b) mass[b] += w[b] / total / values.size();
  }
  return mass;
}

Latent latent(const Tensor& t, int step = 0) { return {t, step}; }

/// Full-coordinate central-difference check of an analytic gradient.
void check_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, const Tensor& grad) {
  const double h = 1e-4;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor p = x, m = x;
    p[i] += h;
    m[i] -= h;
    const double fd = (f(p) - f(m)) / (2 * h);
    const double scale = std::max({std::abs(fd), std::abs(grad[i]), 1e-3});
    worst = std::max(worst, std::abs(fd - grad[i]) / scale);
  }
  EXPECT_LT(worst, 1e-3);
}

}  // namespace

TEST(Sobel, VerticalStepEdge) {
  const double h = 0.6;
  Tensor img = Tensor::hwc(6, 8, 3);
  for (std::size_t y = 0; y < 6; ++y) {
    for (std::size_t x = 4; x < 8; ++x) {
      for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = h;
    }
  }
  const Tensor g = sobel(img);
  for (std::size_t y = 0; y < 6; ++y) {
    for (std::size_t x = 0; x < 8; ++x) {
      const double expected = (x == 3 || x == 4) ? 4 * h : 0.0;
      EXPECT_NEAR(g.at(y, x, 0), expected, 1e-12) << y << "," << x;
      EXPECT_NEAR(g.at(y, x, 1), 0.0, 1e-12);
    }
  }
}

TEST(Sobel, SinglePixelStamp) {
  Tensor img = Tensor::hwc(7, 7, 3);
  for (std::size_t c = 0; c < 3; ++c) img.at(3, 3, c) = 1.0;
  const Tensor g = sobel(img);
  // Response at (3 - i, 3 - j) is the kernel entry at (i, j) mirrored.
  const double stamp_x[3][3] = {{1, 0, -1}, {2, 0, -2}, {1, 0, -1}};
  const double stamp_y[3][3] = {{1, 2, 1}, {0, 0, 0}, {-1, -2, -1}};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      EXPECT_NEAR(g.at(2 + i, 2 + j, 0), stamp_x[i][j], 1e-12);
      EXPECT_NEAR(g.at(2 + i, 2 + j, 1), stamp_y[i][j], 1e-12);
    }
  }
  double outside = 0.0;
  for (std::size_t y = 0; y < 7; ++y) {
    for (std::size_t x = 0; x < 7; ++x) {
      if (y < 2 || y > 4 || x < 2 || x > 4) outside += std::abs(g.at(y, x, 0)) + std::abs(g.at(y, x, 1));
    }
  }
  EXPECT_EQ(outside, 0.0);
}

TEST(Sobel, MatchesDenseOracle) {
  const Tensor img = random_tensor({8, 8, 3}, 1, 0.0, 1.0);
  const Tensor g = sobel(img);
  const auto gx = dense_sobel(img, 0), gy = dense_sobel(img, 1);
  for (std::size_t p = 0; p < 64; ++p) {
    EXPECT_NEAR(g[2 * p], gx[p], 1e-12);
    EXPECT_NEAR(g[2 * p + 1], gy[p], 1e-12);
  }
}

TEST(StructureLossSt, DenseOracleValue) {
  const Tensor src = random_tensor({8, 8, 3}, 2, 0.0, 1.0), gen = random_tensor({8, 8, 3}, 3, 0.0, 1.0);
  const auto sx = dense_sobel(src, 0), sy = dense_sobel(src, 1), gx = dense_sobel(gen, 0), gy = dense_sobel(gen, 1);
  double expected = 0.0;
  for (std::size_t p = 0; p < 64; ++p) expected += (sx[p] - gx[p]) * (sx[p] - gx[p]) + (sy[p] - gy[p]) * (sy[p] - gy[p]);
  EXPECT_NEAR(st_structure_loss(sobel(src), gen), expected, 1e-10);
}

TEST(StructureLossSt, InvariantToConstantShift) {
  const Tensor src = random_tensor({8, 8, 3}, 4, 0.0, 0.5), gen = random_tensor({8, 8, 3}, 5, 0.0, 0.5);
  Tensor shifted = gen;
  for (auto& v : shifted.values()) v += 0.3;
  EXPECT_NEAR(st_structure_loss(sobel(src), gen), st_structure_loss(sobel(src), shifted), 1e-10);
  Tensor src_shifted = src;
  for (auto& v : src_shifted.values()) v += 0.2;
  EXPECT_NEAR(st_structure_loss(sobel(src), gen), st_structure_loss(sobel(src_shifted), gen), 1e-10);
}

TEST(StructureLossSt, GradientMatchesFiniteDifferences) {
  const Tensor src_grad = sobel(random_tensor({8, 8, 3}, 6, 0.0, 1.0));
  const Tensor gen = random_tensor({8, 8, 3}, 7, 0.0, 1.0);
  const LossAndGrad lg = st_structure_loss_with_grad(src_grad, gen);
  EXPECT_DOUBLE_EQ(lg.value, st_structure_loss(src_grad, gen));
  check_gradient([&](const Tensor& g) { return st_structure_loss(src_grad, g); }, gen, lg.grad);
}

TEST(AppearanceLossSt, ElementwiseOracleAndGradient) {
  const Tensor a = random_tensor({8, 8, 4}, 8), b = random_tensor({8, 8, 4}, 9);
  double expected = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) expected += (a[i] - b[i]) * (a[i] - b[i]);
  EXPECT_NEAR(st_appearance_loss(latent(a), latent(b)), expected, 1e-12);
  const LossAndGrad lg = st_appearance_loss_with_grad(latent(a), latent(b));
  check_gradient([&](const Tensor& g) { return st_appearance_loss(latent(a), latent(g)); }, b, lg.grad);
}

TEST(StructureLossTo, OracleGradientAndTimestepCheck) {
  const Tensor a = random_tensor({8, 8, 4}, 10), b = random_tensor({8, 8, 4}, 11);
  double expected = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) expected += (a[i] - b[i]) * (a[i] - b[i]);
  EXPECT_NEAR(to_structure_loss(latent(a, 500), latent(b, 500)), expected, 1e-12);
  const LossAndGrad lg = to_structure_loss_with_grad(latent(a, 500), latent(b, 500));
  check_gradient([&](const Tensor& g) { return to_structure_loss(latent(g, 500), latent(b, 500)); }, a, lg.grad);
  EXPECT_THROW(to_structure_loss(latent(a, 500), latent(b, 450)), std::invalid_argument);
}

TEST(Losses, NonNegativeAndZeroOnIdenticalInputs) {
  const Tensor img = random_tensor({8, 8, 3}, 12, 0.0, 1.0);
  const Tensor z = random_tensor({8, 8, 4}, 13);
  EXPECT_EQ(st_structure_loss(sobel(img), img), 0.0);
  EXPECT_EQ(st_appearance_loss(latent(z), latent(z)), 0.0);
  EXPECT_EQ(to_structure_loss(latent(z, 50), latent(z, 50)), 0.0);
  const std::vector<double> eta{0.25, 0.25, 0.25, 0.25};
  EXPECT_EQ(to_appearance_loss(latent(z), latent(z), eta, HistogramConfig{}), 0.0);
  const Tensor w = random_tensor({8, 8, 4}, 14);
  EXPECT_GT(st_appearance_loss(latent(z), latent(w)), 0.0);
  EXPECT_GT(to_appearance_loss(latent(z), latent(w), eta, HistogramConfig{}), 0.0);
}

TEST(SoftHistogram, MatchesPerSampleKernelOracle) {
  const std::vector<double> values{-3.7, -2.2, -1.9, -1.0, -0.6, -0.1, 0.0, 0.3,
                                   0.7,  1.1,  1.5,  2.0,  2.4,  3.1,  3.9, 4.5};
  HistogramConfig config;
  config.bins = 8;
  const auto mass = soft_histogram(values, config);
  const auto expected = oracle_histogram(values, 8, -4.0, 4.0, 1.0);
  ASSERT_EQ(mass.size(), 8u);
  for (int b = 0; b < 8; ++b) EXPECT_NEAR(mass[b], expected[b], 1e-12) << "bin " << b;
}

TEST(SoftHistogram, SumsToOneAndIsPermutationInvariant) {
  const Tensor t = gaussian_tensor({256}, 15, 1.5);
  std::vector<double> values(t.values().begin(), t.values().end());
  const auto mass = soft_histogram(values, HistogramConfig{});
  double total = 0.0;
  for (const double m : mass) total += m;
  EXPECT_NEAR(total, 1.0, 1e-12);
  std::vector<double> shuffled = values;
  std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(3));
  const auto mass2 = soft_histogram(shuffled, HistogramConfig{});
  for (std::size_t b = 0; b < mass.size(); ++b) EXPECT_NEAR(mass[b], mass2[b], 1e-15);
}

TEST(SoftHistogram, EmptyInputThrows) {
  EXPECT_THROW(soft_histogram(std::vector<double>{}, HistogramConfig{}), std::invalid_argument);
}

TEST(SoftHistogram, VjpMatchesFiniteDifferences) {
  const Tensor v = gaussian_tensor({64}, 16);
  const Tensor up = gaussian_tensor({64}, 17);
  HistogramConfig config;
  auto f = [&](const Tensor& x) {
    const auto m = soft_histogram(x.values(), config);
    double s = 0.0;
    for (std::size_t b = 0; b < m.size(); ++b) s += up[b] * m[b];
    return s;
  };
  const auto g = soft_histogram_vjp(v.values(), config, std::span<const double>(up.data(), 64));
  check_gradient(f, v, Tensor({64}, g));
}

TEST(AppearanceLossTo, ChainedHistogramOracle) {
  const Tensor a = gaussian_tensor({8, 8, 4}, 18), b = gaussian_tensor({8, 8, 4}, 19, 1.3);
  const std::vector<double> eta{0.25, 0.25, 0.25, 0.25};
  HistogramConfig config;
  double expected = 0.0;
  for (std::size_t c = 0; c < 4; ++c) {
    const auto ha = oracle_histogram(a.channel(c), 64, -4.0, 4.0, 0.125);
    const auto hb = oracle_histogram(b.channel(c), 64, -4.0, 4.0, 0.125);
    for (int k = 0; k < 64; ++k) expected += eta[c] * (ha[k] - hb[k]) * (ha[k] - hb[k]);
  }
  EXPECT_NEAR(to_appearance_loss(latent(a), latent(b), eta, config), expected, 1e-12);
}

TEST(AppearanceLossTo, GradientMatchesFiniteDifferences) {
  const Tensor a = gaussian_tensor({8, 8, 4}, 20), b = gaussian_tensor({8, 8, 4}, 21, 1.3);
  const std::vector<double> eta{0.4, 0.1, 0.2, 0.3};
  HistogramConfig config;
  const LossAndGrad lg = to_appearance_loss_with_grad(latent(a), latent(b), eta, config);
  EXPECT_DOUBLE_EQ(lg.value, to_appearance_loss(latent(a), latent(b), eta, config));
  check_gradient([&](const Tensor& g) { return to_appearance_loss(latent(g), latent(b), eta, config); }, a, lg.grad);
}

TEST(Eta, MatchesPerChannelMeanGap) {
  std::vector<Latent> src, tgt;
  for (int i = 0; i < 5; ++i) {
    src.push_back(latent(gaussian_tensor({4, 4, 4}, 100 + i)));
    Tensor t = gaussian_tensor({4, 4, 4}, 200 + i);
    for (std::size_t p = 0; p < 16; ++p) {
      t[4 * p] += 1.0;
      t[4 * p + 2] -= 0.5;
    }
    tgt.push_back(latent(t));
  }
  std::vector<double> gap(4, 0.0);
  for (std::size_t c = 0; c < 4; ++c) {
    double ms = 0.0, mt = 0.0;
    for (int i = 0; i < 5; ++i) {
      for (const double v : src[i].values.channel(c)) ms += v;
      for (const double v : tgt[i].values.channel(c)) mt += v;
    }
    gap[c] = std::abs(mt - ms) / 80.0;
  }
  const double total = gap[0] + gap[1] + gap[2] + gap[3];
  const auto eta = compute_eta(src, tgt);
  ASSERT_EQ(eta.size(), 4u);
  double sum = 0.0;
  for (std::size_t c = 0; c < 4; ++c) {
    EXPECT_NEAR(eta[c], gap[c] / total, 1e-12);
    sum += eta[c];
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);

  std::reverse(src.begin(), src.end());
  std::rotate(tgt.begin(), tgt.begin() + 2, tgt.end());
  const auto permuted = compute_eta(src, tgt);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(permuted[c], eta[c], 1e-12);
}

TEST(Eta, UniformOnIdenticalDomains) {
  std::vector<Latent> set;
  for (int i = 0; i < 3; ++i) set.push_back(latent(gaussian_tensor({4, 4, 4}, 300 + i)));
  for (const double e : compute_eta(set, set)) EXPECT_DOUBLE_EQ(e, 0.25);
}

TEST(DomainSpec, MeanLatentIsEntrywiseMean) {
  const auto backend = untrained_toy();
  std::vector<Tensor> images;
  for (const auto& s : generate_toy_dataset(5, Domain::night, 60)) images.push_back(s.image);
  const DomainSpec spec = build_domain_spec("night", backend->condition("night"), images, backend->codec(), {});
  ASSERT_EQ(spec.example_latents.size(), 5u);
  for (std::size_t i = 0; i < spec.mean_latent.values.size(); ++i) {
    double m = 0.0;
    for (const auto& img : images) m += backend->codec().encode(img)[i];
    EXPECT_NEAR(spec.mean_latent.values[i], m / 5.0, 1e-12);
  }
  for (const double e : spec.eta) EXPECT_DOUBLE_EQ(e, 0.25);
}

TEST(DomainSpec, SaveLoadRoundTripAndValidation) {
  const auto backend = untrained_toy();
  std::vector<Tensor> night, day;
  for (const auto& s : generate_toy_dataset(5, Domain::night, 60)) night.push_back(s.image);
  for (const auto& s : generate_toy_dataset(5, Domain::day, 70)) day.push_back(s.image);
  const DomainSpec spec = build_domain_spec("night", backend->condition("night"), night, backend->codec(), day);
  const auto dir = scratch_dir("domain_spec");
  save_domain_spec(dir / "night.s2a", spec);
  const DomainSpec loaded = load_domain_spec(dir / "night.s2a");
  EXPECT_EQ(loaded.label, "night");
  EXPECT_EQ(loaded.condition.embedding, spec.condition.embedding);
  EXPECT_EQ(loaded.mean_latent.values, spec.mean_latent.values);
  EXPECT_EQ(loaded.eta, spec.eta);
  ASSERT_EQ(loaded.example_latents.size(), 5u);

  DomainSpec broken = spec;
  broken.eta[0] += 0.1;
  EXPECT_THROW(broken.validate(), std::invalid_argument);
  broken = spec;
  broken.mean_latent.values[0] += 1.0;
  EXPECT_THROW(broken.validate(), std::invalid_argument);
}
