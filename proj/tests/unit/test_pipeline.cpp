// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>

#include "fixtures.hpp"
#include "s2st/image_io.hpp"
#include "s2st/pipeline.hpp"

using namespace s2st;
using namespace s2st::test;

namespace {

struct PipelineCase {
  std::unique_ptr<AnalyticGaussianBackend> backend;
  std::filesystem::path dir;
  std::filesystem::path image_path;
  Tensor image;
};

PipelineCase pipeline_case(const std::string& name) {
  PipelineCase c;
  c.backend = analytic_fixture(8, 4, 0.5, 20, 31);
  c.dir = scratch_dir(name);
  c.image = quantize_8bit(random_tensor({8, 8, 3}, 32, 0.3, 1.0));
  c.image_path = c.dir / "scene.png";
  write_png(c.image_path, c.image);
  return c;
}

DomainSpec domain_for(const DenoiserBackend& backend, const std::string& label) {
  std::vector<Tensor> examples;
  for (int i = 0; i < 5; ++i) examples.push_back(random_tensor({8, 8, 3}, 33 + i, 0.0, 0.4));
  return build_domain_spec(label, backend.condition(label), examples, backend.codec(), {});
}

TranslateRequest request_for(const PipelineCase& c, const std::string& domain_label) {
  TranslateRequest r;
  r.image_path = c.image_path;
  r.domain = domain_for(*c.backend, domain_label);
  r.domain_spec_path = (c.dir / "night.domain.s2a").string();
  r.out_dir = c.dir / "out";
  r.config.n_st = 2;
  r.config.n_to = 2;
  return r;
}

}  // namespace

TEST(Config, ParsesKeyValueTextWithComments) {
  const ConfigEntries e = parse_config_text("# header\n\n n_st = 4 \nomega=2.5 # trailing\n");
  EXPECT_EQ(e.at("n_st"), "4");
  EXPECT_EQ(e.at("omega"), "2.5");
  EXPECT_EQ(e.size(), 2u);
  EXPECT_THROW(parse_config_text("not a pair\n"), std::invalid_argument);
}

TEST(Config, DefaultCountsMatchReference) {
  const TranslationConfig c;
  EXPECT_EQ(c.ddim_steps, 20);
  EXPECT_EQ(c.n_st, 10);
  EXPECT_EQ(c.n_to, 10);
  EXPECT_DOUBLE_EQ(c.omega, 3.0);
  EXPECT_EQ(c.hist.bins, 64);
}

TEST(Config, EveryKeyRoundTrips) {
  TranslationConfig c;
  c.lambda_app_st = 0.25;
  c.lambda_str_st = 3.0;
  c.n_st = 7;
  c.lr_st = 0.01;
  c.omega = 5.5;
  c.ddim_steps = 40;
  c.lambda_app_to = 123.0;
  c.lambda_str_to = 0.5;
  c.n_to = 3;
  c.lr_to = 0.2;
  c.to_init = EmbeddingInit::null_text;
  c.to_early_stop = 0.0;
  c.hist = {32, -2.0, 2.0, 0.3};
  c.memory = BackpropMemory::checkpointed;
  c.checkpoint_segment = 2;
  const ConfigEntries entries = to_entries(c);
  TranslationConfig back;
  for (const auto& [k, v] : entries) EXPECT_TRUE(apply_config_entry(back, k, v)) << k;
  EXPECT_EQ(to_entries(back), entries);
  EXPECT_EQ(parse_config_text(format_entries(entries)), entries);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  TranslationConfig c;
  EXPECT_FALSE(apply_config_entry(c, "no_such_key", "1"));
  EXPECT_THROW(apply_config_entry(c, "n_st", "ten"), std::invalid_argument);
  EXPECT_THROW(apply_config_entry(c, "omega", "1.5x"), std::invalid_argument);
  EXPECT_THROW(apply_config_entry(c, "to_init", "random"), std::invalid_argument);
  TranslationConfig bad;
  bad.n_st = -1;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = {};
  bad.lr_to = 0.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = {};
  bad.ddim_steps = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  EXPECT_NO_THROW(TranslationConfig{}.validate());
}

TEST(Manifest, WriteReadRoundTrip) {
  const auto dir = scratch_dir("manifest");
  RunManifest m;
  m.config = to_entries(TranslationConfig{});
  m.input_path = "in/a.png";
  m.source_label = "day";
  m.domain_label = "night";
  m.domain_spec_path = "night.domain.s2a";
  m.backend_id = "toy";
  m.weights_hash = "00ff";
  m.schedule_hash = "abcd";
  m.rng_seed = 17;
  m.output_paths = {"out/a.png", "out/a.run/seed_only.png"};
  m.timings = {{"load", 0.5}, {"encode", 0.25}};
  write_manifest(dir / "manifest.txt", m);
  const RunManifest r = read_manifest(dir / "manifest.txt");
  EXPECT_EQ(r.config, m.config);
  EXPECT_EQ(r.input_path, m.input_path);
  EXPECT_EQ(r.domain_spec_path, m.domain_spec_path);
  EXPECT_EQ(r.weights_hash, m.weights_hash);
  EXPECT_EQ(r.schedule_hash, m.schedule_hash);
  EXPECT_EQ(r.rng_seed, 17);
  EXPECT_EQ(r.output_paths, m.output_paths);
  EXPECT_EQ(r.timings, m.timings);
}

TEST(Translate, IdentityConfigurationReproducesReconstruction) {
  const PipelineCase c = pipeline_case("identity");
  TranslateRequest req = request_for(c, "day");
  req.config.n_st = 0;
  req.config.n_to = 0;
  req.config.omega = 1.0;
  req.config.ddim_steps = 100;
  const TranslateOutput out = translate(req, *c.backend);
  const Latent z0{c.backend->codec().encode(c.image), 0};
  const Condition day = c.backend->condition("day");
  const Latent recon = sample(invert(z0, *c.backend, day, req.config).clean, *c.backend, day, req.config).clean;
  EXPECT_LT(max_abs_diff(out.output_image, c.backend->codec().decode(recon.values)), 1e-12);
  EXPECT_LT(max_abs_diff(out.output_image, c.image), 0.05);
}

TEST(Translate, WritesOutputLayoutAndManifest) {
  const PipelineCase c = pipeline_case("layout");
  TranslateRequest req = request_for(c, "night");
  req.save_trajectories = true;
  req.rng_seed = 5;
  const TranslateOutput out = translate(req, *c.backend);
  const auto run_dir = run_directory(req.out_dir, req.image_path);
  EXPECT_EQ(out.output_path, req.out_dir / "scene.png");
  for (const char* f : {"manifest.txt", "st_losses.csv", "to_losses.csv", "seed_only.png", "embeddings.s2a",
                        "inversion.s2a", "generation.s2a"}) {
    EXPECT_TRUE(std::filesystem::exists(run_dir / f)) << f;
  }
  EXPECT_TRUE(std::filesystem::exists(out.output_path));
  const RunManifest m = read_manifest(run_dir / "manifest.txt");
  EXPECT_EQ(m.config, to_entries(req.config));
  EXPECT_EQ(m.domain_label, "night");
  EXPECT_EQ(m.rng_seed, 5);
  EXPECT_EQ(m.weights_hash, checksum_hex(c.backend->weights_checksum()));
  std::vector<std::string> phases;
  for (const auto& [phase, seconds] : m.timings) {
    phases.push_back(phase);
    EXPECT_GE(seconds, 0.0);
  }
  const std::vector<std::string> expected{"load", "encode", "invert", "seed-translate", "trajectory-optimize",
                                          "decode", "write"};
  EXPECT_EQ(phases, expected);
  EXPECT_EQ(read_png(out.output_path), quantize_8bit(out.output_image));
}

TEST(Translate, WrongImageShapeFailsInLoadAndWritesNothing) {
  PipelineCase c = pipeline_case("bad_shape");
  write_png(c.image_path, Tensor::hwc(6, 8, 3, 0.5));
  const TranslateRequest req = request_for(c, "night");
  try {
    translate(req, *c.backend);
    FAIL() << "expected PhaseError";
  } catch (const PhaseError& e) {
    EXPECT_EQ(e.phase(), "load");
    EXPECT_EQ(std::string(e.what()).rfind("load: ", 0), 0u);
  }
  EXPECT_FALSE(std::filesystem::exists(req.out_dir / "scene.png"));
  EXPECT_FALSE(std::filesystem::exists(run_directory(req.out_dir, req.image_path)));
}

TEST(Translate, InvalidConfigFailsInLoad) {
  const PipelineCase c = pipeline_case("bad_config");
  TranslateRequest req = request_for(c, "night");
  req.config.lr_st = -1.0;
  try {
    translate(req, *c.backend);
    FAIL() << "expected PhaseError";
  } catch (const PhaseError& e) {
    EXPECT_EQ(e.phase(), "load");
  }
}

TEST(Translate, RepeatedRunsAreIdentical) {
  const PipelineCase c = pipeline_case("repeat");
  const TranslateRequest req = request_for(c, "night");
  const TranslateOutput a = translate(req, *c.backend);
  const TranslateOutput b = translate(req, *c.backend);
  EXPECT_LE(max_abs_diff(a.output_image, b.output_image), 1e-6);
  EXPECT_EQ(a.seed_translation.translated_seed.values, b.seed_translation.translated_seed.values);
}
