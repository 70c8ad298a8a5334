// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "s2st/tensor.hpp"

namespace s2st {

enum class Domain { day, night };

const char* to_string(Domain domain);
Domain parse_domain(const std::string& text);

/// Geometry of a procedural street scene. Depends only on the layout seed.
struct SceneLayout {
  struct Vehicle {
    double left, top, right, bottom;
    double color[3];
  };
  struct Lamp {
    double x;
    double top;
  };

  int layout_seed = 0;
  double horizon = 0.0;
  std::vector<Vehicle> vehicles;
  std::vector<Lamp> lamps;
};

struct ToyScene {
  Tensor image;
  Domain domain = Domain::day;
  int layout_seed = 0;
};

inline constexpr std::size_t kToyImageSize = 64;

SceneLayout make_layout(int layout_seed, std::size_t size = kToyImageSize);

/// Renders the layout. Day: bright sky, unlit headlights and lamps. Night:
/// dark sky, bright headlight and lamp discs with additive halos.
Tensor render_scene(const SceneLayout& layout, Domain domain, std::size_t size = kToyImageSize);

/// H x W x 1 mask, 1 inside vehicles, headlights, poles and lamp heads.
Tensor object_mask(const SceneLayout& layout, std::size_t size = kToyImageSize);

ToyScene make_scene(int layout_seed, Domain domain, std::size_t size = kToyImageSize);

/// `count` scenes with layout seeds rng_seed, rng_seed+1, ... rendered in `domain`.
std::vector<ToyScene> generate_toy_dataset(int count, Domain domain, int rng_seed);

/// "{domain}_{layout_seed:05d}.png"
std::string scene_filename(const ToyScene& scene);

/// Writes every scene as PNG into `dir`; returns the written paths.
std::vector<std::filesystem::path> write_dataset(const std::vector<ToyScene>& scenes, const std::filesystem::path& dir);

}  // namespace s2st
