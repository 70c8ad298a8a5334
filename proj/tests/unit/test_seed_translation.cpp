// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "fixtures.hpp"
#include "s2st/errors.hpp"
#include "s2st/seed_translation.hpp"

using namespace s2st;
using namespace s2st::test;

namespace {

struct AnalyticCase {
  std::unique_ptr<AnalyticGaussianBackend> backend;
  DomainSpec domain;
  Tensor source;
  Latent seed;
};

AnalyticCase analytic_case(int steps = 20) {
  AnalyticCase c;
  c.backend = analytic_fixture(8, 4, 0.5, steps, 5);
  std::vector<Tensor> examples;
  for (int i = 0; i < 5; ++i) examples.push_back(random_tensor({8, 8, 3}, 40 + i, 0.0, 0.4));
  c.domain = build_domain_spec("night", c.backend->condition("night"), examples, c.backend->codec(), {});
  c.source = random_tensor({8, 8, 3}, 50, 0.3, 1.0);
  TranslationConfig config;
  config.ddim_steps = steps;
  c.seed = invert({c.backend->codec().encode(c.source), 0}, *c.backend, c.backend->condition("day"), config).clean;
  return c;
}

DomainSpec toy_night_domain(const DenoiserBackend& backend) {
  std::vector<Tensor> night, day;
  for (const auto& s : generate_toy_dataset(5, Domain::night, 20000)) night.push_back(s.image);
  for (const auto& s : generate_toy_dataset(5, Domain::day, 30000)) day.push_back(s.image);
  return build_domain_spec("night", backend.condition("night"), night, backend.codec(), day);
}

void expect_objective_gradient(const DenoiserBackend& backend, const Latent& seed, const Tensor& source,
                               const DomainSpec& domain, const TranslationConfig& config, int directions) {
  const SeedObjective obj = seed_objective(seed, source, domain, backend, config);
  EXPECT_GT(l2_norm(obj.seed_grad), 0.0);
  auto f = [&](const Tensor& s) { return seed_objective({s, seed.timestep}, source, domain, backend, config).losses.total; };
  for (int k = 0; k < directions; ++k) {
    const Tensor dir = gaussian_tensor(seed.values.shape(), 70 + k);
    const double fd = directional_fd(f, seed.values, dir);
    EXPECT_LT(relative_error(dot(obj.seed_grad, dir), fd), 1e-3) << "direction " << k;
  }
}

}  // namespace

TEST(SeedTranslation, ZeroIterationsReturnsSeed) {
  AnalyticCase c = analytic_case();
  TranslationConfig config;
  config.n_st = 0;
  const auto r = seed_translate(c.seed, c.source, c.domain, *c.backend, config);
  EXPECT_EQ(r.translated_seed.values, c.seed.values);
  EXPECT_TRUE(r.loss_history.empty());
  EXPECT_EQ(r.generation_trajectory.entries.size(), 21u);
}

TEST(SeedTranslation, AppearanceGradientMatchesFiniteDifferencesOnAnalytic) {
  AnalyticCase c = analytic_case(2);
  TranslationConfig config;
  config.ddim_steps = 2;
  config.lambda_str_st = 0.0;
  expect_objective_gradient(*c.backend, c.seed, c.source, c.domain, config, 4);
}

TEST(SeedTranslation, FullLossGradientMatchesFiniteDifferencesOnAnalytic) {
  AnalyticCase c = analytic_case(2);
  TranslationConfig config;
  config.ddim_steps = 2;
  expect_objective_gradient(*c.backend, c.seed, c.source, c.domain, config, 4);
}

TEST(SeedTranslation, FullLossGradientMatchesFiniteDifferencesOnToy) {
  const auto backend = untrained_toy();
  const DomainSpec domain = toy_night_domain(*backend);
  const Tensor source = make_scene(11000, Domain::day).image;
  TranslationConfig config;
  config.ddim_steps = 2;
  const Latent seed{gaussian_tensor(backend->latent_shape(), 80), 1000};
  expect_objective_gradient(*backend, seed, source, domain, config, 3);
}

TEST(SeedTranslation, FirstAdamStepFollowsGradientSign) {
  AnalyticCase c = analytic_case(2);
  TranslationConfig config;
  config.ddim_steps = 2;
  config.n_st = 1;
  const SeedObjective obj = seed_objective(c.seed, c.source, c.domain, *c.backend, config);
  const auto r = seed_translate(c.seed, c.source, c.domain, *c.backend, config);
  for (std::size_t i = 0; i < obj.seed_grad.size(); ++i) {
    if (std::abs(obj.seed_grad[i]) < 1e-4) continue;
    const double step = r.translated_seed.values[i] - c.seed.values[i];
    EXPECT_NEAR(step, -config.lr_st * std::copysign(1.0, obj.seed_grad[i]), 1e-3 * config.lr_st);
  }
  EXPECT_NEAR(r.loss_history[0].total, obj.losses.total, 1e-12);
}

TEST(SeedTranslation, DeterministicAndLeavesInputsUntouched) {
  AnalyticCase c = analytic_case();
  TranslationConfig config;
  config.n_st = 3;
  const auto weights = c.backend->weights_checksum();
  const Tensor mean_before = c.domain.mean_latent.values;
  const auto a = seed_translate(c.seed, c.source, c.domain, *c.backend, config);
  const auto b = seed_translate(c.seed, c.source, c.domain, *c.backend, config);
  EXPECT_EQ(a.translated_seed.values, b.translated_seed.values);
  EXPECT_EQ(a.sampled.values, b.sampled.values);
  EXPECT_EQ(c.backend->weights_checksum(), weights);
  EXPECT_EQ(c.domain.mean_latent.values, mean_before);
}

TEST(SeedTranslation, CheckpointedMemoryGivesSameResult) {
  AnalyticCase c = analytic_case();
  TranslationConfig config;
  config.n_st = 3;
  const auto a = seed_translate(c.seed, c.source, c.domain, *c.backend, config);
  config.memory = BackpropMemory::checkpointed;
  config.checkpoint_segment = 4;
  const auto b = seed_translate(c.seed, c.source, c.domain, *c.backend, config);
  EXPECT_EQ(a.translated_seed.values, b.translated_seed.values);
}

TEST(SeedTranslation, StructureOnlyLossStartsAtReconstructionDistance) {
  AnalyticCase c = analytic_case();
  TranslationConfig config;
  config.n_st = 1;
  config.lambda_app_st = 0.0;
  const auto r = seed_translate(c.seed, c.source, c.domain, *c.backend, config);
  const Latent recon = sample(c.seed, *c.backend, c.domain.condition, config).clean;
  const double expected = config.lambda_str_st * st_structure_loss(sobel(c.source), c.backend->codec().decode(recon.values));
  EXPECT_NEAR(r.loss_history[0].total, expected, 1e-9 * std::max(1.0, expected));
}

TEST(SeedTranslation, NonFiniteLossRaisesOptimizationError) {
  AnalyticCase c = analytic_case();
  Tensor bad = c.source;
  bad[5] = std::numeric_limits<double>::quiet_NaN();
  TranslationConfig config;
  config.n_st = 2;
  try {
    seed_translate(c.seed, bad, c.domain, *c.backend, config);
    FAIL() << "expected OptimizationError";
  } catch (const OptimizationError& e) {
    EXPECT_EQ(e.timestep(), -1);
    EXPECT_EQ(e.iteration(), 0);
  }
}

TEST(SeedTranslation, RejectsMismatchedShapes) {
  AnalyticCase c = analytic_case();
  EXPECT_THROW(seed_translate(c.seed, Tensor::hwc(4, 4, 3), c.domain, *c.backend, TranslationConfig{}),
               std::invalid_argument);
  EXPECT_THROW(seed_translate({Tensor::hwc(4, 4, 4), 1000}, c.source, c.domain, *c.backend, TranslationConfig{}),
               std::invalid_argument);
}

TEST(SeedTranslation, ToyDayToNightReducesAppearanceLoss) {
  const ToyBackend& backend = small_trained_toy();
  const DomainSpec domain = toy_night_domain(backend);
  const Tensor source = make_scene(11000, Domain::day).image;
  TranslationConfig config;
  const Latent seed = invert({backend.codec().encode(source), 0}, backend, backend.condition("day"), config).clean;
  const auto weights = backend.weights_checksum();
  const auto r = seed_translate(seed, source, domain, backend, config);
  ASSERT_EQ(r.loss_history.size(), 10u);
  EXPECT_LT(r.final_losses.appearance, r.loss_history[0].appearance);
  EXPECT_LE(r.final_losses.total, r.loss_history[0].total);
  EXPECT_EQ(backend.weights_checksum(), weights);
}

TEST(SeedTranslation, LossCsvHasHeaderAndRows) {
  const auto dir = scratch_dir("st_csv");
  write_seed_loss_csv(dir / "st.csv", {{0, 1.5, 2.5, 4.0}, {1, 1.0, 2.0, 3.0}});
  std::ifstream in(dir / "st.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "iteration,app_loss,str_loss,total");
  EXPECT_EQ(row, "0,1.5,2.5,4");
}
