#include "morphdet/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "morphdet/errors.hpp"

namespace morphdet {

namespace {

// Skips whitespace and '#' comment lines between header tokens.
int next_header_int(std::istream& is, const std::string& path) {
  for (;;) {
    int c = is.peek();
    if (c == '#') {
      std::string line;
      std::getline(is, line);
    } else if (std::isspace(c)) {
      is.get();
    } else {
      break;
    }
  }
  int v = -1;
  is >> v;
  if (!is || v < 0) throw IoError("malformed PNM header in " + path);
  return v;
}

unsigned char quantise(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<unsigned char>(std::lround(c * 255.0));
}

}  // namespace

Image read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open image: " + path);
  char m0 = 0, m1 = 0;
  is.get(m0);
  is.get(m1);
  if (m0 != 'P' || m1 != '6') throw IoError("not a binary PPM (P6): " + path);
  const int w = next_header_int(is, path);
  const int h = next_header_int(is, path);
  const int maxval = next_header_int(is, path);
  if (maxval != 255) {
    throw IoError("unsupported PPM maxval " + std::to_string(maxval) + " in " + path);
  }
  is.get();  // single whitespace after maxval
  Image img(static_cast<std::size_t>(h), static_cast<std::size_t>(w));
  std::vector<unsigned char> raw(img.data.size());
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!is) throw IoError("truncated PPM payload in " + path);
  for (std::size_t i = 0; i < raw.size(); ++i) img.data[i] = raw[i] / 255.0;
  return img;
}

void write_ppm(const std::string& path, const Image& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open image for writing: " + path);
  os << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> raw(img.data.size());
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = quantise(img.data[i]);
  os.write(reinterpret_cast<const char*>(raw.data()),
           static_cast<std::streamsize>(raw.size()));
  if (!os) throw IoError("short write on " + path);
}

void write_pgm(const std::string& path, const GreyImage& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open image for writing: " + path);
  os << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> raw(img.data.size());
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = quantise(img.data[i]);
  os.write(reinterpret_cast<const char*>(raw.data()),
           static_cast<std::streamsize>(raw.size()));
  if (!os) throw IoError("short write on " + path);
}

}  // namespace morphdet
