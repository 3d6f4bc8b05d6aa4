#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "mine/core/array.hpp"

namespace mine::data {

// 8-bit RGB raster, row-major, 3 bytes per pixel.
struct ImageRaster {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  ImageRaster() = default;
  ImageRaster(std::size_t w, std::size_t h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(w * h * 3, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) {
    return pixels[(y * width + x) * 3 + c];
  }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const {
    return pixels[(y * width + x) * 3 + c];
  }
  void set(std::size_t x, std::size_t y, std::uint8_t r, std::uint8_t g, std::uint8_t b);

  bool operator==(const ImageRaster&) const = default;
};

// Binary PPM (P6, maxval 255).
ImageRaster read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const ImageRaster& image);
std::vector<std::uint8_t> encode_ppm(const ImageRaster& image);
ImageRaster decode_ppm(const std::vector<std::uint8_t>& bytes);

// Nearest-neighbour resize; the documented way to bring a raster to the
// model's configured square size.
ImageRaster resize_nearest(const ImageRaster& image, std::size_t width, std::size_t height);

// Splits a square raster into non-overlapping patch x patch tiles, row-major
// over tiles; each row holds one tile's pixels (RGB interleaved) in [0, 1].
Array patchify(const ImageRaster& image, std::size_t patch);

}  // namespace mine::data
