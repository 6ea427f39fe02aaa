#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace morphdet {

// Interleaved RGB raster, values in [0,1], row-major (y, x, channel).
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;  // height*width*3

  Image() = default;
  Image(std::size_t h, std::size_t w) : height(h), width(w), data(h * w * 3, 0.0) {}

  double& at(std::size_t y, std::size_t x, std::size_t c) {
    return data[(y * width + x) * 3 + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return data[(y * width + x) * 3 + c];
  }
  std::size_t pixels() const { return height * width; }
};

struct GreyImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;  // height*width

  GreyImage() = default;
  GreyImage(std::size_t h, std::size_t w) : height(h), width(w), data(h * w, 0.0) {}

  double& at(std::size_t y, std::size_t x) { return data[y * width + x]; }
  double at(std::size_t y, std::size_t x) const { return data[y * width + x]; }
};

// Binary PPM (P6, 8-bit). Quantises on write; scales to [0,1] on read.
Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& img);

// Binary PGM (P5, 8-bit), values clamped to [0,1] then quantised.
void write_pgm(const std::string& path, const GreyImage& img);

}  // namespace morphdet
