#pragma once

// Binary netpbm images: P6 (RGB) and P5 (grayscale), maxval 255.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "wsod/tensor.hpp"

namespace wsod {

/// Intensity in [0, 1] to a byte: round(255 v), clamped.
std::uint8_t to_byte(double v);

/// Writes a 3 x H x W tensor with values in [0, 1].
void write_ppm(const std::filesystem::path& path, const Tensor& rgb);
/// Returns a 3 x H x W tensor with values byte / 255.
Tensor read_ppm(const std::filesystem::path& path);

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

void write_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);

}  // namespace wsod
