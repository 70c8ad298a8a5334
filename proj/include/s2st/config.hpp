// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace s2st {

struct HistogramConfig {
  int bins = 64;
  double lo = -4.0;
  double hi = 4.0;
  /// Gaussian kernel width; 0 selects the bin width.
  double bandwidth = 0.0;

  double bin_width() const { return (hi - lo) / bins; }
  double effective_bandwidth() const { return bandwidth > 0.0 ? bandwidth : bin_width(); }
};

/// How each timestep's optimized null embedding is initialized.
enum class EmbeddingInit { null_text, previous_step };

/// Memory policy for backpropagation through the sampling chain.
enum class BackpropMemory { retain_all, checkpointed };

struct TranslationConfig {
  // Seed translation.
  double lambda_app_st = 1.0;
  double lambda_str_st = 1.0;
  int n_st = 10;
  double lr_st = 5e-2;

  // Shared sampler settings.
  double omega = 3.0;
  int ddim_steps = 20;

  // Trajectory optimization.
  double lambda_app_to = 3e6;
  double lambda_str_to = 60.0;
  int n_to = 10;
  double lr_to = 1e-1;
  EmbeddingInit to_init = EmbeddingInit::previous_step;
  /// Inner loop stops once the loss changes by less than this between
  /// consecutive iterations; 0 disables.
  double to_early_stop = 1e-6;

  HistogramConfig hist;

  BackpropMemory memory = BackpropMemory::retain_all;
  /// Sampling steps per recomputed segment in checkpointed mode.
  int checkpoint_segment = 5;

  /// Throws std::invalid_argument on negative counts/weights or non-positive rates.
  void validate() const;
};

/// Flat key=value configuration. Blank lines and '#' comments are ignored.
using ConfigEntries = std::map<std::string, std::string>;

ConfigEntries parse_config_text(const std::string& text);
ConfigEntries read_config_file(const std::filesystem::path& path);

/// Applies one key to the config. Returns false for keys the config does not own.
bool apply_config_entry(TranslationConfig& config, const std::string& key, const std::string& value);

/// Every TranslationConfig field as key=value, in a stable order.
ConfigEntries to_entries(const TranslationConfig& config);
std::string format_entries(const ConfigEntries& entries);

}  // namespace s2st
