#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

namespace astar {

class PgmError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8/16-bit grayscale raster.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  unsigned maxval = 255;
  std::vector<std::uint16_t> pixels;  // row-major
};

/// Reads plain (P2) or binary (P5) graymaps, including '#' comments in the header.
GrayImage read_pgm(const std::filesystem::path& path);

/// Writes a binary (P5) graymap with maxval 255.
void write_pgm(const std::filesystem::path& path, const GrayImage& image);

/// Map value v in [0, 1] to gray round(255 v); values outside [0, 1] are clamped.
std::uint8_t gray_level(double v);

/// r x r heatmap of `values` (row-major) scaled so 1.0 -> 255.
GrayImage heatmap(std::span<const double> values, std::size_t resolution);

}  // namespace astar
