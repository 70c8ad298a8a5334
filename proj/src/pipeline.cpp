// SPDX-License-Identifier: Apache-2.0
#include "s2st/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <type_traits>

#include "s2st/archive.hpp"
#include "s2st/image_io.hpp"

namespace s2st {

namespace {

constexpr const char* kConfigPrefix = "config.";
constexpr const char* kOutputPrefix = "output.";
constexpr const char* kTimingPrefix = "timing.";

std::string indexed(const char* prefix, std::size_t i, const std::string& suffix = "") {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02zu", i);
  return std::string(prefix) + buf + suffix;
}

/// Records files as they are written and deletes them unless committed.
class OutputGuard {
 public:
  ~OutputGuard() {
    if (committed_) return;
    std::error_code ec;
    for (auto it = paths_.rbegin(); it != paths_.rend(); ++it) std::filesystem::remove_all(*it, ec);
  }
  const std::filesystem::path& track(std::filesystem::path p) { return paths_.emplace_back(std::move(p)); }
  void commit() { committed_ = true; }

 private:
  std::vector<std::filesystem::path> paths_;
  bool committed_ = false;
};

class PhaseTimer {
 public:
  explicit PhaseTimer(RunManifest& manifest) : manifest_(manifest) {}

  template <typename F>
  auto run(const std::string& phase, F&& body) {
    const auto start = std::chrono::steady_clock::now();
    try {
      if constexpr (std::is_void_v<std::invoke_result_t<F>>) {
        body();
        record(phase, start);
      } else {
        auto value = body();
        record(phase, start);
        return value;
      }
    } catch (const PhaseError&) {
      throw;
    } catch (const std::exception& e) {
      throw PhaseError(phase, e.what());
    }
  }

 private:
  void record(const std::string& phase, std::chrono::steady_clock::time_point start) {
    manifest_.timings.emplace_back(phase,
                                   std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  RunManifest& manifest_;
};

}  // namespace

std::filesystem::path run_directory(const std::filesystem::path& out_dir, const std::filesystem::path& image_path) {
  return out_dir / (image_path.stem().string() + ".run");
}

void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
  ConfigEntries entries{
      {"input_path", m.input_path},         {"source_label", m.source_label},
      {"domain_label", m.domain_label},     {"domain_spec_path", m.domain_spec_path},
      {"backend_id", m.backend_id},         {"weights_hash", m.weights_hash},
      {"schedule_hash", m.schedule_hash},   {"rng_seed", std::to_string(m.rng_seed)},
  };
  for (const auto& [k, v] : m.config) entries[kConfigPrefix + k] = v;
  for (std::size_t i = 0; i < m.output_paths.size(); ++i) entries[indexed(kOutputPrefix, i)] = m.output_paths[i];
  for (std::size_t i = 0; i < m.timings.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", m.timings[i].second);
    entries[indexed(kTimingPrefix, i, "." + m.timings[i].first)] = buf;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# translate run manifest\n" << format_entries(entries);
}

RunManifest read_manifest(const std::filesystem::path& path) {
  const ConfigEntries entries = read_config_file(path);
  const std::string source = path.string();
  RunManifest m;
  m.input_path = require_key(entries, "input_path", source);
  m.source_label = require_key(entries, "source_label", source);
  m.domain_label = require_key(entries, "domain_label", source);
  m.domain_spec_path = require_key(entries, "domain_spec_path", source);
  m.backend_id = require_key(entries, "backend_id", source);
  m.weights_hash = require_key(entries, "weights_hash", source);
  m.schedule_hash = require_key(entries, "schedule_hash", source);
  m.rng_seed = std::stoi(require_key(entries, "rng_seed", source));
  for (const auto& [k, v] : entries) {
    if (k.starts_with(kConfigPrefix)) {
      m.config[k.substr(std::string(kConfigPrefix).size())] = v;
    } else if (k.starts_with(kOutputPrefix)) {
      m.output_paths.push_back(v);
    } else if (k.starts_with(kTimingPrefix)) {
      const std::string rest = k.substr(std::string(kTimingPrefix).size());
      const auto dot = rest.find('.');
      m.timings.emplace_back(dot == std::string::npos ? rest : rest.substr(dot + 1), std::stod(v));
    }
  }
  return m;
}

TranslateOutput translate(const TranslateRequest& request, const DenoiserBackend& backend) {
  TranslateOutput out;
  RunManifest& m = out.manifest;
  m.config = to_entries(request.config);
  m.input_path = request.image_path.string();
  m.source_label = request.source_label;
  m.domain_label = request.domain.label;
  m.domain_spec_path = request.domain_spec_path;
  m.backend_id = backend.architecture_id();
  m.weights_hash = checksum_hex(backend.weights_checksum());
  m.rng_seed = request.rng_seed;

  OutputGuard guard;
  PhaseTimer timer(m);
  const TranslationConfig& config = request.config;

  const Tensor image = timer.run("load", [&] {
    config.validate();
    request.domain.validate();
    m.schedule_hash = sampling_schedule(backend, config).hash();
    Tensor img = read_png(request.image_path);
    if (img.shape() != backend.codec().image_shape()) {
      throw std::invalid_argument("image " + request.image_path.string() + " has shape " + shape_to_string(img.shape()) +
                                  ", backend expects " + shape_to_string(backend.codec().image_shape()));
    }
    return img;
  });
  const Latent z0 = timer.run("encode", [&] { return Latent{backend.codec().encode(image), 0}; });
  const SampleResult inversion =
      timer.run("invert", [&] { return invert(z0, backend, backend.condition(request.source_label), config); });
  out.seed_translation = timer.run(
      "seed-translate", [&] { return seed_translate(inversion.clean, image, request.domain, backend, config); });
  out.trajectory_optimization = timer.run("trajectory-optimize", [&] {
    return trajectory_optimize(inversion.trajectory, out.seed_translation.generation_trajectory,
                               out.seed_translation.translated_seed, request.domain, backend, config);
  });
  timer.run("decode", [&] {
    out.output_image = out.trajectory_optimization.output_image;
    out.seed_only_image = backend.codec().decode(out.seed_translation.sampled.values);
  });

  timer.run("write", [&] {
    std::filesystem::create_directories(request.out_dir);
    const std::filesystem::path run_dir = run_directory(request.out_dir, request.image_path);
    if (std::filesystem::exists(run_dir)) std::filesystem::remove_all(run_dir);
    guard.track(run_dir);
    std::filesystem::create_directories(run_dir);

    out.output_path = guard.track(request.out_dir / (request.image_path.stem().string() + ".png"));
    write_png(out.output_path, out.output_image);
    m.output_paths.push_back(out.output_path.string());

    const auto seed_only = run_dir / "seed_only.png";
    write_png(seed_only, out.seed_only_image);
    write_seed_loss_csv(run_dir / "st_losses.csv", out.seed_translation.loss_history);
    write_step_loss_csv(run_dir / "to_losses.csv", out.trajectory_optimization.per_step_losses);
    save_embedding_schedule(run_dir / "embeddings.s2a", out.trajectory_optimization.optimized_embeddings);
    m.output_paths.push_back(seed_only.string());
    m.output_paths.push_back((run_dir / "st_losses.csv").string());
    m.output_paths.push_back((run_dir / "to_losses.csv").string());
    m.output_paths.push_back((run_dir / "embeddings.s2a").string());
    if (request.save_trajectories) {
      save_trajectory(run_dir / "inversion.s2a", inversion.trajectory);
      save_trajectory(run_dir / "generation.s2a", out.seed_translation.generation_trajectory);
      m.output_paths.push_back((run_dir / "inversion.s2a").string());
      m.output_paths.push_back((run_dir / "generation.s2a").string());
    }
  });
  timer.run("manifest", [&] { write_manifest(run_directory(request.out_dir, request.image_path) / "manifest.txt", m); });
  guard.commit();
  return out;
}

}  // namespace s2st
