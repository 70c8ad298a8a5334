// SPDX-License-Identifier: Apache-2.0
#include "s2st/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace s2st {

namespace {

std::uint8_t to_byte(double v) {
  // nearbyint follows the current rounding mode, which is round-half-to-even by default.
  return static_cast<std::uint8_t>(std::nearbyint(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

Tensor read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw std::runtime_error("png: cannot read " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw std::runtime_error("png: cannot decode " + path.string() + ": " + image.message);
  }
  Tensor out = Tensor::hwc(image.height, image.width, 3);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = buffer[i] / 255.0;
  return out;
}

void write_png(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.channels() != 3) throw std::invalid_argument("png: expected an H x W x 3 image");
  std::vector<std::uint8_t> buffer(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) buffer[i] = to_byte(image[i]);
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width());
  png.height = static_cast<png_uint_32>(image.height());
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw std::runtime_error("png: cannot write " + path.string() + ": " + png.message);
  }
}

Tensor quantize_8bit(const Tensor& image) {
  Tensor out(image.shape());
  for (std::size_t i = 0; i < image.size(); ++i) out[i] = to_byte(image[i]) / 255.0;
  return out;
}

std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace s2st
