// SPDX-License-Identifier: Apache-2.0
#include "s2st/toy_scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

#include "s2st/image_io.hpp"

namespace s2st {

namespace {

struct Rgb {
  double r, g, b;
};

double ramp(double d) { return std::clamp(0.5 + d, 0.0, 1.0); }

double rect_coverage(double x, double y, double left, double top, double right, double bottom) {
  return ramp(std::min(x - left, right - x)) * ramp(std::min(y - top, bottom - y));
}

double disc_coverage(double x, double y, double cx, double cy, double radius) {
  return ramp(radius - std::hypot(x - cx, y - cy));
}

void blend(Tensor& img, std::size_t y, std::size_t x, const Rgb& c, double alpha) {
  if (alpha <= 0.0) return;
  img.at(y, x, 0) += alpha * (c.r - img.at(y, x, 0));
  img.at(y, x, 1) += alpha * (c.g - img.at(y, x, 1));
  img.at(y, x, 2) += alpha * (c.b - img.at(y, x, 2));
}

Rgb lerp(const Rgb& a, const Rgb& b, double t) {
  return {a.r + t * (b.r - a.r), a.g + t * (b.g - a.g), a.b + t * (b.b - a.b)};
}

/// Headlight centers for a vehicle: front-bottom corners.
std::array<std::pair<double, double>, 2> headlights(const SceneLayout::Vehicle& v) {
  const double y = v.bottom - 2.5;
  return {{{v.left + 2.5, y}, {v.right - 2.5, y}}};
}

constexpr double kHeadlightRadius = 1.8;
constexpr double kLampRadius = 2.4;
constexpr double kPoleHalfWidth = 0.9;

double pole_bottom(const SceneLayout& layout) { return layout.horizon + 5.0; }

/// Separable Gaussian blur with replicate borders.
Tensor blur(const Tensor& img, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += kernel[static_cast<std::size_t>(i + radius)];
  }
  for (double& k : kernel) k /= total;
  const long h = static_cast<long>(img.height()), w = static_cast<long>(img.width());
  Tensor tmp(img.shape()), out(img.shape());
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += kernel[static_cast<std::size_t>(i + radius)] *
                 img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(std::clamp(x + i, 0L, w - 1)), c);
        }
        tmp.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c) = acc;
      }
    }
  }
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += kernel[static_cast<std::size_t>(i + radius)] *
                 tmp.at(static_cast<std::size_t>(std::clamp(y + i, 0L, h - 1)), static_cast<std::size_t>(x), c);
        }
        out.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c) = acc;
      }
    }
  }
  return out;
}

}  // namespace

const char* to_string(Domain domain) { return domain == Domain::day ? "day" : "night"; }

Domain parse_domain(const std::string& text) {
  if (text == "day") return Domain::day;
  if (text == "night") return Domain::night;
  throw std::invalid_argument("unknown domain '" + text + "' (expected day or night)");
}

SceneLayout make_layout(int layout_seed, std::size_t size) {
  const double s = static_cast<double>(size) / 64.0;
  std::mt19937_64 rng(static_cast<std::uint64_t>(layout_seed) * 0x9E3779B97F4A7C15ULL + 17);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  auto pick = [&](int lo, int hi) { return lo + static_cast<int>(unit(rng) * (hi - lo + 1) * 0.999999); };

  SceneLayout layout;
  layout.layout_seed = layout_seed;
  layout.horizon = uniform(22.0, 32.0) * s;

  const int vehicles = pick(1, 4);
  for (int i = 0; i < vehicles; ++i) {
    SceneLayout::Vehicle v{};
    const double width = uniform(12.0, 20.0) * s;
    const double height = uniform(7.0, 11.0) * s;
    v.left = uniform(1.0, 63.0 * s - width);
    v.right = v.left + width;
    v.bottom = uniform(layout.horizon + 12.0 * s, 62.0 * s);
    v.top = v.bottom - height;
    for (double& c : v.color) c = uniform(0.3, 0.9);
    layout.vehicles.push_back(v);
  }
  // Nearer vehicles (lower on screen) are drawn last.
  std::sort(layout.vehicles.begin(), layout.vehicles.end(),
            [](const auto& a, const auto& b) { return a.bottom < b.bottom; });

  const int lamps = pick(0, 3);
  for (int i = 0; i < lamps; ++i) {
    layout.lamps.push_back({uniform(4.0, 60.0) * s, uniform(6.0, layout.horizon - 8.0 * s)});
  }
  return layout;
}

Tensor render_scene(const SceneLayout& layout, Domain domain, std::size_t size) {
  const bool night = domain == Domain::night;
  const Rgb sky_top = night ? Rgb{0.16, 0.18, 0.32} : Rgb{0.55, 0.70, 0.95};
  const Rgb sky_low = night ? Rgb{0.30, 0.28, 0.36} : Rgb{0.78, 0.86, 0.95};
  const Rgb ground_far = night ? Rgb{0.22, 0.21, 0.23} : Rgb{0.52, 0.52, 0.54};
  const Rgb ground_near = night ? Rgb{0.16, 0.16, 0.18} : Rgb{0.40, 0.40, 0.42};
  const Rgb headlight = night ? Rgb{1.0, 0.96, 0.78} : Rgb{0.30, 0.30, 0.28};
  const Rgb pole = night ? Rgb{0.08, 0.08, 0.10} : Rgb{0.22, 0.22, 0.25};
  const Rgb lamp = night ? Rgb{1.0, 0.92, 0.62} : Rgb{0.28, 0.28, 0.30};
  const double body_scale = night ? 0.4 : 1.0;

  Tensor img = Tensor::hwc(size, size, 3);
  const double n = static_cast<double>(size);
  for (std::size_t y = 0; y < size; ++y) {
    const double py = static_cast<double>(y) + 0.5;
    for (std::size_t x = 0; x < size; ++x) {
      const double px = static_cast<double>(x) + 0.5;
      const Rgb sky = lerp(sky_top, sky_low, std::clamp(py / layout.horizon, 0.0, 1.0));
      const Rgb ground = lerp(ground_far, ground_near, std::clamp((py - layout.horizon) / (n - layout.horizon), 0.0, 1.0));
      const double below = ramp(py - layout.horizon);
      blend(img, y, x, sky, 1.0);
      blend(img, y, x, ground, below);

      for (const auto& l : layout.lamps) {
        blend(img, y, x, pole, rect_coverage(px, py, l.x - kPoleHalfWidth, l.top, l.x + kPoleHalfWidth, pole_bottom(layout)));
        blend(img, y, x, lamp, disc_coverage(px, py, l.x, l.top, kLampRadius));
      }
      for (const auto& v : layout.vehicles) {
        const Rgb body{body_scale * v.color[0], body_scale * v.color[1], body_scale * v.color[2]};
        blend(img, y, x, body, rect_coverage(px, py, v.left, v.top, v.right, v.bottom));
        for (const auto& [hx, hy] : headlights(v)) blend(img, y, x, headlight, disc_coverage(px, py, hx, hy, kHeadlightRadius));
      }
    }
  }

  if (night) {
    // Additive warm halos around every light source.
    for (std::size_t y = 0; y < size; ++y) {
      const double py = static_cast<double>(y) + 0.5;
      for (std::size_t x = 0; x < size; ++x) {
        const double px = static_cast<double>(x) + 0.5;
        double glow = 0.0;
        for (const auto& v : layout.vehicles) {
          for (const auto& [hx, hy] : headlights(v)) {
            const double d2 = (px - hx) * (px - hx) + (py - hy) * (py - hy);
            glow += 0.35 * std::exp(-d2 / (2.0 * 4.0 * 4.0));
          }
        }
        for (const auto& l : layout.lamps) {
          const double d2 = (px - l.x) * (px - l.x) + (py - l.top) * (py - l.top);
          glow += 0.3 * std::exp(-d2 / (2.0 * 5.0 * 5.0));
        }
        img.at(y, x, 0) += glow;
        img.at(y, x, 1) += 0.9 * glow;
        img.at(y, x, 2) += 0.6 * glow;
      }
    }
  }

  img = blur(img, 0.7);
  for (double& v : img.values()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

Tensor object_mask(const SceneLayout& layout, std::size_t size) {
  Tensor mask = Tensor::hwc(size, size, 1);
  for (std::size_t y = 0; y < size; ++y) {
    const double py = static_cast<double>(y) + 0.5;
    for (std::size_t x = 0; x < size; ++x) {
      const double px = static_cast<double>(x) + 0.5;
      double cover = 0.0;
      for (const auto& l : layout.lamps) {
        cover = std::max(cover, rect_coverage(px, py, l.x - kPoleHalfWidth, l.top, l.x + kPoleHalfWidth, pole_bottom(layout)));
        cover = std::max(cover, disc_coverage(px, py, l.x, l.top, kLampRadius));
      }
      for (const auto& v : layout.vehicles) cover = std::max(cover, rect_coverage(px, py, v.left, v.top, v.right, v.bottom));
      mask.at(y, x, 0) = cover >= 0.5 ? 1.0 : 0.0;
    }
  }
  return mask;
}

ToyScene make_scene(int layout_seed, Domain domain, std::size_t size) {
  return ToyScene{render_scene(make_layout(layout_seed, size), domain, size), domain, layout_seed};
}

std::vector<ToyScene> generate_toy_dataset(int count, Domain domain, int rng_seed) {
  if (count <= 0) throw std::invalid_argument("generate_toy_dataset: count must be positive");
  std::vector<ToyScene> scenes;
  scenes.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) scenes.push_back(make_scene(rng_seed + i, domain));
  return scenes;
}

std::string scene_filename(const ToyScene& scene) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%05d.png", to_string(scene.domain), scene.layout_seed);
  return buf;
}

std::vector<std::filesystem::path> write_dataset(const std::vector<ToyScene>& scenes, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  for (const auto& scene : scenes) {
    paths.push_back(dir / scene_filename(scene));
    write_png(paths.back(), scene.image);
  }
  return paths;
}

}  // namespace s2st
