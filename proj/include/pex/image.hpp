#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pex/error.hpp"

namespace pex {

// Interleaved 8-bit RGB, row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  static Image filled(int w, int h, std::array<std::uint8_t, 3> color);

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }

  const std::uint8_t* at(int x, int y) const {
    return rgb.data() + 3 * (static_cast<std::size_t>(y) * width + x);
  }
  std::uint8_t* at(int x, int y) {
    return rgb.data() + 3 * (static_cast<std::size_t>(y) * width + x);
  }

  std::array<std::uint8_t, 3> mean_color() const;
};

Image read_image_png(const std::string& path);
void write_image_png(const std::string& path, const Image& img);

// 8-bit grayscale PNG, used for segment label maps (value 255 = unlabeled).
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

GrayImage read_gray_png(const std::string& path);
void write_gray_png(const std::string& path, const GrayImage& img);

}  // namespace pex
