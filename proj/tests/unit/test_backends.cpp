// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "fixtures.hpp"
#include "s2st/archive.hpp"
#include "s2st/diffusion.hpp"
#include "s2st/errors.hpp"

using namespace s2st;
using namespace s2st::test;

namespace {

// E[x0 | x_t] for x0 ~ N(mu, sigma^2), x_t = sqrt(a) x0 + sqrt(1-a) n, by
// trapezoidal quadrature over x0.
double quadrature_posterior_mean(double x_t, double a, double mu, double sigma) {
  const double lo = mu - 10.0 * sigma, hi = mu + 10.0 * sigma;
  const int n = 20000;
  const double h = (hi - lo) / n;
  double num = 0.0, den = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x0 = lo + i * h;
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    const double prior = std::exp(-0.5 * (x0 - mu) * (x0 - mu) / (sigma * sigma));
    const double r = x_t - std::sqrt(a) * x0;
    const double like = std::exp(-0.5 * r * r / (1.0 - a));
    num += w * x0 * prior * like;
    den += w * prior * like;
  }
  return num / den;
}

double psnr(const Tensor& a, const Tensor& b) { return 10.0 * std::log10(1.0 / (squared_norm(a - b) / a.size())); }

}  // namespace

TEST(AnalyticBackend, MatchesQuadratureOracle) {
  const double sigma = 1.0;
  const Tensor mu({1, 1, 4}, 0.0);
  const auto backend = analytic_gaussian_backend(mu, sigma, DiffusionSchedule::scaled_linear());
  for (const int t : {50, 300, 700, 1000}) {
    const double a = backend->schedule().alpha(t);
    const Tensor x({1, 1, 4}, std::vector<double>{-1.3, 0.2, 0.9, 2.1});
    const Tensor m = backend->posterior_mean(x, t, backend->null_condition());
    const Tensor eps = backend->predict_noise(x, t, backend->null_condition());
    for (std::size_t k = 0; k < 4; ++k) {
      const double closed = std::sqrt(a) * x[k] / (a * sigma * sigma + 1.0 - a);
      const double quad = quadrature_posterior_mean(x[k], a, 0.0, sigma);
      EXPECT_NEAR(m[k], closed, 1e-12);
      EXPECT_NEAR(m[k], quad, 1e-8);
      EXPECT_NEAR(eps[k], (x[k] - std::sqrt(a) * quad) / std::sqrt(1.0 - a), 1e-7);
    }
  }
}

TEST(AnalyticBackend, ConditionShiftsMean) {
  const Tensor mu = random_tensor({2, 2, 4}, 3);
  std::map<std::string, Tensor> conditions{{"night", Tensor({4}, std::vector<double>{0.1, -0.2, 0.3, 0.0})}};
  const auto backend = analytic_gaussian_backend(mu, 0.5, DiffusionSchedule::scaled_linear(), conditions);
  const int t = 400;
  const double a = backend->schedule().alpha(t);
  const Tensor x = random_tensor(mu.shape(), 4);
  const Tensor m = backend->posterior_mean(x, t, backend->condition("night"));
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double mu_c = mu[i] + conditions["night"][i % 4];
    EXPECT_NEAR(m[i], quadrature_posterior_mean(x[i], a, mu_c, 0.5), 1e-8);
  }
  EXPECT_THROW(backend->condition("fog"), std::invalid_argument);
}

TEST(AnalyticBackend, VjpMatchesFiniteDifferences) {
  const auto backend = analytic_fixture(4, 4, 0.5);
  const Tensor x = random_tensor(backend->latent_shape(), 5);
  const Tensor up = random_tensor(backend->latent_shape(), 6);
  const Condition c = backend->condition("night");
  const NoiseVjp vjp = backend->predict_noise_vjp(x, 300, c, up);
  const Tensor dx = random_tensor(x.shape(), 7);
  auto fx = [&](const Tensor& v) { return dot(up, backend->predict_noise(v, 300, c)); };
  EXPECT_LT(relative_error(dot(vjp.input, dx), directional_fd(fx, x, dx)), 1e-6);
  const Tensor dc = random_tensor(c.embedding.shape(), 8);
  auto fc = [&](const Tensor& e) { return dot(up, backend->predict_noise(x, 300, {e, "night"})); };
  EXPECT_LT(relative_error(dot(vjp.condition, dc), directional_fd(fc, c.embedding, dc)), 1e-6);
}

TEST(AnalyticBackend, RejectsCleanTimestep) {
  const auto backend = analytic_fixture();
  EXPECT_THROW(backend->predict_noise(backend->mu(), 0, backend->null_condition()), std::invalid_argument);
}

TEST(AnalyticBackend, CodecRoundTripIsExact) {
  const auto backend = analytic_fixture(8, 4);
  const Tensor img = random_tensor({8, 8, 3}, 9, 0.0, 1.0);
  EXPECT_EQ(backend->codec().decode(backend->codec().encode(img)), img);
}

TEST(ToyScenes, DayBrighterThanNightForEveryLayout) {
  for (int seed = 0; seed < 100; ++seed) {
    const double day = mean(make_scene(seed, Domain::day).image);
    const double night = mean(make_scene(seed, Domain::night).image);
    EXPECT_GT(day, night) << "layout " << seed;
  }
}

TEST(ToyScenes, LayoutDependsOnlyOnSeed) {
  const SceneLayout a = make_layout(42), b = make_layout(42), c = make_layout(43);
  EXPECT_EQ(object_mask(a), object_mask(b));
  EXPECT_NE(object_mask(a), object_mask(c));
  EXPECT_EQ(render_scene(a, Domain::night), render_scene(b, Domain::night));
  const ToyScene day = make_scene(42, Domain::day), night = make_scene(42, Domain::night);
  EXPECT_EQ(day.layout_seed, night.layout_seed);
  EXPECT_NE(day.image, night.image);
}

TEST(ToyScenes, DistinctSeedsGiveDistinctGeometry) {
  std::set<std::uint64_t> masks;
  for (int seed = 0; seed < 50; ++seed) masks.insert(checksum(object_mask(make_layout(seed)).values()));
  EXPECT_EQ(masks.size(), 50u);
}

TEST(ToyScenes, DatasetNamingAndRange) {
  const auto scenes = generate_toy_dataset(5, Domain::night, 12);
  ASSERT_EQ(scenes.size(), 5u);
  EXPECT_EQ(scene_filename(scenes[0]), "night_00012.png");
  EXPECT_EQ(scenes[4].layout_seed, 16);
  for (const auto& s : scenes) {
    EXPECT_EQ(s.image.shape(), (Shape{64, 64, 3}));
    for (const double v : s.image.values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(ToyCodec, ReconstructionPsnrAbove25dB) {
  std::vector<Tensor> fit_images;
  for (const auto& s : generate_toy_dataset(16, Domain::day, 0)) fit_images.push_back(s.image);
  for (const auto& s : generate_toy_dataset(16, Domain::night, 0)) fit_images.push_back(s.image);
  const ToyCodec codec = ToyCodec::fit(fit_images);
  for (const Domain d : {Domain::day, Domain::night}) {
    for (const auto& s : generate_toy_dataset(8, d, 5000)) {
      EXPECT_GE(psnr(codec.decode(codec.encode(s.image)), s.image), 25.0);
    }
  }
}

TEST(ToyCodec, DecodeVjpMatchesFiniteDifferences) {
  const auto backend = untrained_toy();
  const LatentCodec& codec = backend->codec();
  const Tensor z = gaussian_tensor(codec.latent_shape(), 10);
  const Tensor up = random_tensor(codec.image_shape(), 11);
  const Tensor g = codec.decode_vjp(z, up);
  const Tensor dir = gaussian_tensor(z.shape(), 12);
  auto f = [&](const Tensor& v) { return dot(up, codec.decode(v)); };
  EXPECT_LT(relative_error(dot(g, dir), directional_fd(f, z, dir)), 1e-6);
}

TEST(ToyNetwork, VjpMatchesFiniteDifferences) {
  const auto backend = untrained_toy();
  const Tensor x = gaussian_tensor(backend->latent_shape(), 13);
  const Tensor up = gaussian_tensor(backend->latent_shape(), 14);
  const Condition c = backend->condition("day");
  const NoiseVjp vjp = backend->predict_noise_vjp(x, 420, c, up);
  for (int k = 0; k < 3; ++k) {
    const Tensor dx = gaussian_tensor(x.shape(), 20 + k);
    auto fx = [&](const Tensor& v) { return dot(up, backend->predict_noise(v, 420, c)); };
    EXPECT_LT(relative_error(dot(vjp.input, dx), directional_fd(fx, x, dx)), 1e-5);
    const Tensor dc = gaussian_tensor(c.embedding.shape(), 30 + k);
    auto fc = [&](const Tensor& e) { return dot(up, backend->predict_noise(x, 420, {e, "day"})); };
    EXPECT_LT(relative_error(dot(vjp.condition, dc), directional_fd(fc, c.embedding, dc)), 1e-5);
  }
}

TEST(ToyNetwork, ParameterGradientMatchesFiniteDifferences) {
  ToyNetwork net;
  net.initialize(5);
  const std::vector<Tensor> x{gaussian_tensor(net.latent_shape(), 1), gaussian_tensor(net.latent_shape(), 2)};
  const std::vector<int> t{100, 800};
  const std::vector<Tensor> cond{net.stored_condition("day"), net.stored_condition("night")};
  const std::vector<Tensor> target{gaussian_tensor(net.latent_shape(), 3), gaussian_tensor(net.latent_shape(), 4)};
  std::vector<double> grad(net.parameter_count(), 0.0);
  net.mse_loss_and_grad(x, t, cond, target, grad, nullptr);
  std::mt19937_64 rng(9);
  for (int k = 0; k < 12; ++k) {
    const std::size_t i = rng() % net.parameter_count();
    const double saved = net.params()[i];
    const double h = 1e-5;
    net.params()[i] = saved + h;
    const double up = net.mse_loss(x, t, cond, target);
    net.params()[i] = saved - h;
    const double down = net.mse_loss(x, t, cond, target);
    net.params()[i] = saved;
    const double fd = (up - down) / (2 * h);
    EXPECT_NEAR(grad[i], fd, 1e-6 + 1e-4 * std::abs(fd)) << "param " << i;
  }
}

TEST(ToyBackend, ConditionsAndLabels) {
  const auto backend = untrained_toy();
  EXPECT_EQ(backend->architecture_id(), "toy-resconv-v1");
  EXPECT_EQ(backend->null_condition().embedding, backend->condition("").embedding);
  EXPECT_NE(backend->condition("day").embedding, backend->condition("night").embedding);
  EXPECT_THROW(backend->condition("fog"), std::invalid_argument);
  EXPECT_EQ(backend->latent_shape(), (Shape{16, 16, 4}));
  EXPECT_EQ(backend->codec().image_shape(), (Shape{64, 64, 3}));
}

TEST(ToyBackend, SaveLoadRoundTrip) {
  const auto backend = untrained_toy(17);
  const auto dir = scratch_dir("toy_weights");
  save_toy_backend(*backend, dir / "toy.s2a");
  const auto loaded = load_toy_backend(dir / "toy.s2a");
  EXPECT_EQ(loaded->weights_checksum(), backend->weights_checksum());
  const Tensor x = gaussian_tensor(backend->latent_shape(), 18);
  EXPECT_EQ(loaded->predict_noise(x, 500, loaded->condition("night")),
            backend->predict_noise(x, 500, backend->condition("night")));
  EXPECT_EQ(loaded->schedule().hash(), backend->schedule().hash());
}

TEST(ToyBackend, LoadRejectsChecksumMismatch) {
  const auto backend = untrained_toy(19);
  const auto dir = scratch_dir("toy_tampered");
  save_toy_backend(*backend, dir / "toy.s2a");
  Metadata meta = read_metadata(sidecar_path(dir / "toy.s2a"));
  meta["weights_checksum"] = "0000000000000000";
  write_metadata(sidecar_path(dir / "toy.s2a"), meta);
  EXPECT_THROW(load_toy_backend(dir / "toy.s2a"), std::runtime_error);
}

TEST(ToyTraining, NonFiniteLossRaisesTrainingError) {
  const auto data = generate_toy_dataset(2, Domain::day, 0);
  auto both = data;
  for (const auto& s : generate_toy_dataset(2, Domain::night, 0)) both.push_back(s);
  ToyTrainingOptions options;
  options.learning_rate = std::numeric_limits<double>::infinity();
  try {
    train_toy_backend(both, 3, 1, options);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_GE(e.epoch(), 0);
    EXPECT_LT(e.epoch(), 3);
  }
}

TEST(ToyTraining, RequiresBothDomains) {
  EXPECT_THROW(train_toy_backend(generate_toy_dataset(2, Domain::day, 0), 1, 1), std::invalid_argument);
}

TEST(ToyTraining, DeterministicGivenSeed) {
  auto data = generate_toy_dataset(2, Domain::day, 0);
  for (const auto& s : generate_toy_dataset(2, Domain::night, 0)) data.push_back(s);
  EXPECT_EQ(train_toy_backend(data, 2, 5)->weights_checksum(), train_toy_backend(data, 2, 5)->weights_checksum());
}

TEST(ToyTraining, HeldOutLossBelowUntrained) {
  const ToyBackend& trained = small_trained_toy();
  auto held_out = generate_toy_dataset(8, Domain::day, 9000);
  for (const auto& s : generate_toy_dataset(8, Domain::night, 9000)) held_out.push_back(s);
  ToyNetwork fresh;
  fresh.initialize(7);
  const ToyBackend untrained(std::move(fresh), trained.toy_codec(), trained.schedule(), {});
  EXPECT_LT(denoising_loss(trained, held_out, 77), denoising_loss(untrained, held_out, 77));
}

TEST(ToyTraining, NightGenerationsDarkerThanDay) {
  const ToyBackend& backend = small_trained_toy();
  TranslationConfig config;
  double day = 0.0, night = 0.0;
  for (int i = 0; i < 32; ++i) {
    const Latent seed{gaussian_tensor(backend.latent_shape(), 500 + i), 1000};
    day += mean(backend.codec().decode(sample(seed, backend, backend.condition("day"), config).clean.values));
    night += mean(backend.codec().decode(sample(seed, backend, backend.condition("night"), config).clean.values));
  }
  EXPECT_LT(night / 32, day / 32);
}
