#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace crashformer {

/// Interleaved 8-bit RGB raster, row-major.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Decodes any PNG colour type to RGB (alpha dropped, palettes expanded,
/// 16-bit stripped).
RgbImage decode_png(std::span<const std::uint8_t> bytes);
RgbImage read_png(const std::string& path);
std::vector<std::uint8_t> encode_png(const RgbImage& image);
void write_png(const std::string& path, const RgbImage& image);

/// Nearest-neighbour resample.
RgbImage resize_nearest(const RgbImage& src, int width, int height);
/// Box-filter downsample by an integer factor (both dimensions divisible).
RgbImage downsample_box(const RgbImage& src, int factor);

}  // namespace crashformer
