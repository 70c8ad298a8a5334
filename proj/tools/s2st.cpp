// SPDX-License-Identifier: Apache-2.0
// Command-line front end: dataset generation, toy training, domain specs,
// inversion, translation and evaluation.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <regex>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "s2st/config.hpp"
#include "s2st/diffusion.hpp"
#include "s2st/errors.hpp"
#include "s2st/image_io.hpp"
#include "s2st/losses.hpp"
#include "s2st/metrics.hpp"
#include "s2st/pipeline.hpp"
#include "s2st/toy_backend.hpp"
#include "s2st/toy_scene.hpp"

namespace fs = std::filesystem;
using namespace s2st;

namespace {

struct GlobalOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  int seed = 0;
  std::string out_dir = "out";
  bool save_trajectories = false;
};

TranslationConfig load_config(const GlobalOptions& g) {
  TranslationConfig config;
  if (!g.config_path.empty()) {
    for (const auto& [k, v] : read_config_file(g.config_path)) {
      if (!apply_config_entry(config, k, v)) throw std::invalid_argument("unknown config key '" + k + "' in " + g.config_path);
    }
  }
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    if (!apply_config_entry(config, key, kv.substr(eq + 1))) throw std::invalid_argument("unknown config key '" + key + "'");
  }
  config.validate();
  return config;
}

/// Reads "day_00012.png" style files from a directory.
std::vector<ToyScene> read_scene_dir(const fs::path& dir) {
  static const std::regex pattern(R"((day|night)_(\d+)\.png)");
  std::vector<ToyScene> scenes;
  for (const auto& path : list_pngs(dir)) {
    std::smatch m;
    const std::string name = path.filename().string();
    if (!std::regex_match(name, m, pattern)) {
      std::fprintf(stderr, "warning: skipping %s (expected day_NNNNN.png or night_NNNNN.png)\n", name.c_str());
      continue;
    }
    scenes.push_back({read_png(path), parse_domain(m[1].str()), std::stoi(m[2].str())});
  }
  return scenes;
}

std::vector<Tensor> read_images(const fs::path& dir) {
  std::vector<Tensor> images;
  for (const auto& path : list_pngs(dir)) images.push_back(read_png(path));
  if (images.empty()) throw std::invalid_argument("no PNG files in " + dir.string());
  return images;
}

int cmd_gen_data(const GlobalOptions& g, int count, const std::string& domain) {
  const fs::path out(g.out_dir);
  std::vector<Domain> domains;
  if (domain == "both") {
    domains = {Domain::day, Domain::night};
  } else {
    domains = {parse_domain(domain)};
  }
  for (const Domain d : domains) {
    const auto scenes = generate_toy_dataset(count, d, g.seed);
    const auto paths = write_dataset(scenes, out);
    std::printf("wrote %zu %s scenes to %s\n", paths.size(), to_string(d), out.string().c_str());
  }
  return 0;
}

int cmd_train_toy(const GlobalOptions& g, const std::string& data_dir, int epochs, const std::string& weights) {
  const auto scenes = read_scene_dir(data_dir);
  std::printf("training on %zu scenes for %d epochs (seed %d)\n", scenes.size(), epochs, g.seed);
  ToyTrainingOptions options;
  options.on_epoch = [epochs](int epoch, double loss) {
    std::printf("epoch %4d/%d  loss %.5f\n", epoch + 1, epochs, loss);
    std::fflush(stdout);
  };
  const auto backend = train_toy_backend(scenes, epochs, g.seed, options);
  const fs::path path = weights.empty() ? fs::path(g.out_dir) / "toy.s2a" : fs::path(weights);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_toy_backend(*backend, path);
  std::printf("saved %s (checksum %s)\n", path.string().c_str(), checksum_hex(backend->weights_checksum()).c_str());
  return 0;
}

int cmd_build_domain(const GlobalOptions& g, const std::string& weights, const std::string& label,
                     const std::string& examples, const std::string& sources, const std::string& spec_path) {
  const auto backend = load_toy_backend(weights);
  const std::vector<Tensor> example_images = read_images(examples);
  const std::vector<Tensor> source_images = sources.empty() ? std::vector<Tensor>{} : read_images(sources);
  const DomainSpec spec =
      build_domain_spec(label, backend->condition(label), example_images, backend->codec(), source_images);
  const fs::path path = spec_path.empty() ? fs::path(g.out_dir) / (label + ".domain.s2a") : fs::path(spec_path);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_domain_spec(path, spec);
  std::printf("domain '%s': %zu examples, eta =", label.c_str(), spec.example_latents.size());
  for (const double e : spec.eta) std::printf(" %.4f", e);
  std::printf("\nsaved %s\n", path.string().c_str());
  return 0;
}

int cmd_invert(const GlobalOptions& g, const std::string& weights, const std::string& source,
               const std::vector<std::string>& images) {
  const TranslationConfig config = load_config(g);
  const auto backend = load_toy_backend(weights);
  const fs::path out(g.out_dir);
  fs::create_directories(out);
  for (const auto& image_path : images) {
    const Latent z0{backend->codec().encode(read_png(image_path)), 0};
    const SampleResult result = invert(z0, *backend, backend->condition(source), config);
    const fs::path path = out / (fs::path(image_path).stem().string() + ".inversion.s2a");
    save_trajectory(path, result.trajectory);
    std::printf("%s -> %s (seed t=%d)\n", image_path.c_str(), path.string().c_str(), result.clean.timestep);
  }
  return 0;
}

int cmd_translate(const GlobalOptions& g, const std::string& weights, const std::string& domain_path,
                  const std::string& source, const std::vector<std::string>& images) {
  const TranslationConfig config = load_config(g);
  const auto backend = load_toy_backend(weights);
  const DomainSpec domain = load_domain_spec(domain_path);
  int failures = 0;
  for (const auto& image_path : images) {
    TranslateRequest request;
    request.image_path = image_path;
    request.source_label = source;
    request.domain = domain;
    request.domain_spec_path = domain_path;
    request.config = config;
    request.out_dir = g.out_dir;
    request.save_trajectories = g.save_trajectories;
    request.rng_seed = g.seed;
    try {
      const TranslateOutput out = translate(request, *backend);
      double total = 0.0;
      for (const auto& [phase, seconds] : out.manifest.timings) total += seconds;
      std::printf("%s -> %s (%.1f s)\n", image_path.c_str(), out.output_path.string().c_str(), total);
    } catch (const PhaseError& e) {
      std::fprintf(stderr, "error: %s: %s\n", image_path.c_str(), e.what());
      ++failures;
    }
  }
  return failures == 0 ? 0 : 1;
}

int cmd_evaluate(const GlobalOptions& g, const std::string& outputs, const std::string& target,
                 const std::string& sources) {
  const MetricsReport report = evaluate(outputs, target, sources);
  fs::create_directories(g.out_dir);
  write_metrics(g.out_dir, report);
  std::printf("kid %.6f  ssim %.6f  grad_struct_dist %.6f  (%zu pairs)\n", report.kid, report.ssim,
              report.grad_struct_dist, report.pair_count);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"s2st: seed-to-seed image translation"};
  app.require_subcommand(1);

  GlobalOptions g;
  app.add_option("--config", g.config_path, "key=value configuration file")->check(CLI::ExistingFile);
  app.add_option("--set", g.overrides, "Override one config key (key=value); repeatable");
  app.add_option("--seed", g.seed, "RNG / layout seed");
  app.add_option("--out-dir", g.out_dir, "Output directory");
  app.add_flag("--save-trajectories", g.save_trajectories, "Keep inversion and generation trajectories");

  int count = 64;
  std::string domain = "both";
  auto* gen = app.add_subcommand("gen-data", "Render procedural day/night street scenes");
  gen->add_option("--count", count, "Scenes per domain");
  gen->add_option("--domain", domain, "day, night or both")->check(CLI::IsMember({"day", "night", "both"}));

  std::string data_dir, weights;
  int epochs = 100;
  auto* train = app.add_subcommand("train-toy", "Train the toy denoiser on a gen-data directory");
  train->add_option("--data", data_dir, "Directory of day_*.png / night_*.png")->required()->check(CLI::ExistingDirectory);
  train->add_option("--epochs", epochs, "Training epochs");
  train->add_option("--weights", weights, "Output weights archive (default <out-dir>/toy.s2a)");

  std::string label = "night", examples, sources, spec_path;
  auto* build = app.add_subcommand("build-domain", "Encode target examples into a domain spec");
  build->add_option("--weights", weights, "Toy weights archive")->required()->check(CLI::ExistingFile);
  build->add_option("--label", label, "Domain condition label");
  build->add_option("--examples", examples, "Directory of target-domain images")->required()->check(CLI::ExistingDirectory);
  build->add_option("--sources", sources, "Directory of source-domain images for eta")->check(CLI::ExistingDirectory);
  build->add_option("--spec", spec_path, "Output spec archive (default <out-dir>/<label>.domain.s2a)");

  std::string source = "day";
  std::vector<std::string> images;
  auto* inv = app.add_subcommand("invert", "DDIM-invert images to seeds");
  inv->add_option("--weights", weights, "Toy weights archive")->required()->check(CLI::ExistingFile);
  inv->add_option("--source", source, "Source condition label");
  inv->add_option("images", images, "Input PNGs")->required()->check(CLI::ExistingFile);

  std::string domain_path;
  auto* tr = app.add_subcommand("translate", "Translate images into the target domain");
  tr->add_option("--weights", weights, "Toy weights archive")->required()->check(CLI::ExistingFile);
  tr->add_option("--domain", domain_path, "Domain spec archive")->required()->check(CLI::ExistingFile);
  tr->add_option("--source", source, "Source condition label");
  tr->add_option("images", images, "Input PNGs")->required()->check(CLI::ExistingFile);

  std::string outputs_dir, target_dir, sources_dir;
  auto* ev = app.add_subcommand("evaluate", "KID, SSIM and gradient-structure distance");
  ev->add_option("--outputs", outputs_dir, "Translated images")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--target", target_dir, "Target-domain reference set")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--sources", sources_dir, "Source images, paired by filename")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen_data(g, count, domain);
    if (*train) return cmd_train_toy(g, data_dir, epochs, weights);
    if (*build) return cmd_build_domain(g, weights, label, examples, sources, spec_path);
    if (*inv) return cmd_invert(g, weights, source, images);
    if (*tr) return cmd_translate(g, weights, domain_path, source, images);
    if (*ev) return cmd_evaluate(g, outputs_dir, target_dir, sources_dir);
  } catch (const TrainingError& e) {
    std::fprintf(stderr, "error: training failed at epoch %d: %s\n", e.epoch(), e.what());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
  }
  return 1;
}
