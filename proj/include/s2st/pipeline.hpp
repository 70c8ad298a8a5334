// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "s2st/backend.hpp"
#include "s2st/config.hpp"
#include "s2st/losses.hpp"
#include "s2st/seed_translation.hpp"
#include "s2st/trajectory_optimization.hpp"

namespace s2st {

/// Failure inside one pipeline phase. what() reads "<phase>: <cause>".
class PhaseError : public std::runtime_error {
 public:
  PhaseError(std::string phase, const std::string& cause)
      : std::runtime_error(phase + ": " + cause), phase_(std::move(phase)) {}
  const std::string& phase() const noexcept { return phase_; }

 private:
  std::string phase_;
};

/// Everything needed to reproduce a translate run.
struct RunManifest {
  ConfigEntries config;
  std::string input_path;
  std::string source_label;
  std::string domain_label;
  std::string domain_spec_path;
  std::string backend_id;
  std::string weights_hash;
  std::string schedule_hash;
  int rng_seed = 0;
  std::vector<std::string> output_paths;
  /// Wall-clock seconds per phase, in execution order.
  std::vector<std::pair<std::string, double>> timings;
};

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);
RunManifest read_manifest(const std::filesystem::path& path);

struct TranslateRequest {
  std::filesystem::path image_path;
  /// Condition label used to invert the source image.
  std::string source_label = "day";
  DomainSpec domain;
  std::string domain_spec_path;
  TranslationConfig config;
  std::filesystem::path out_dir;
  bool save_trajectories = false;
  int rng_seed = 0;
};

struct TranslateOutput {
  RunManifest manifest;
  std::filesystem::path output_path;
  Tensor output_image;
  /// Decoded sample of the translated seed before trajectory optimization.
  Tensor seed_only_image;
  SeedTranslationResult seed_translation;
  TrajectoryOptimizationResult trajectory_optimization;
};

/// encode -> invert -> seed_translate -> trajectory_optimize -> decode.
/// Writes <out>/<stem>.png and a <out>/<stem>.run/ directory holding
/// manifest.txt, st_losses.csv, to_losses.csv, seed_only.png, the optimized
/// embeddings and, when requested, both trajectories. On failure every file
/// written so far is removed and a PhaseError names the phase.
TranslateOutput translate(const TranslateRequest& request, const DenoiserBackend& backend);

/// Directory holding the run artifacts for an output image path.
std::filesystem::path run_directory(const std::filesystem::path& out_dir, const std::filesystem::path& image_path);

}  // namespace s2st
