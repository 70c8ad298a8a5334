// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <vector>

#include "s2st/tensor.hpp"

namespace s2st {

/// Loads any PNG as an H x W x 3 tensor in [0,1] (8-bit, alpha dropped, gray expanded).
Tensor read_png(const std::filesystem::path& path);

/// Writes an H x W x 3 tensor as 8-bit RGB. Values are clamped to [0,1] and
/// value*255 is rounded half-to-even.
void write_png(const std::filesystem::path& path, const Tensor& image);

/// The 8-bit quantization write_png applies, returned as [0,1] reals.
Tensor quantize_8bit(const Tensor& image);

/// Sorted *.png files directly inside `dir`.
std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir);

}  // namespace s2st
