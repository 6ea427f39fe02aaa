#include "morphdet/degrade.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "morphdet/errors.hpp"

namespace morphdet {

namespace {

std::size_t reflect(long i, long n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return static_cast<std::size_t>(i);
}

// ISO/IEC 10918-1 Annex K luminance quantisation table.
constexpr std::array<int, 64> kLumaTable = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

std::array<double, 64> scaled_quant_table(int quality) {
  const double scale =
      quality < 50 ? 5000.0 / quality : 200.0 - 2.0 * quality;
  std::array<double, 64> q{};
  for (int i = 0; i < 64; ++i) {
    const double v = std::floor((kLumaTable[i] * scale + 50.0) / 100.0);
    q[i] = std::clamp(v, 1.0, 255.0);
  }
  return q;
}

struct DctBasis {
  // cos((2x+1) u pi / 16) premultiplied with the C(u) normalisation.
  double c[8][8];
  DctBasis() {
    for (int u = 0; u < 8; ++u) {
      const double cu = u == 0 ? 1.0 / std::numbers::sqrt2 : 1.0;
      for (int x = 0; x < 8; ++x) {
        c[u][x] = 0.5 * cu * std::cos((2.0 * x + 1.0) * u * std::numbers::pi / 16.0);
      }
    }
  }
};

const DctBasis& dct_basis() {
  static const DctBasis basis;
  return basis;
}

void dct8x8(const double in[64], double out[64]) {
  const auto& b = dct_basis();
  double tmp[64];
  for (int y = 0; y < 8; ++y)
    for (int u = 0; u < 8; ++u) {
      double s = 0.0;
      for (int x = 0; x < 8; ++x) s += in[y * 8 + x] * b.c[u][x];
      tmp[y * 8 + u] = s;
    }
  for (int u = 0; u < 8; ++u)
    for (int v = 0; v < 8; ++v) {
      double s = 0.0;
      for (int y = 0; y < 8; ++y) s += tmp[y * 8 + u] * b.c[v][y];
      out[v * 8 + u] = s;
    }
}

void idct8x8(const double in[64], double out[64]) {
  const auto& b = dct_basis();
  double tmp[64];
  for (int v = 0; v < 8; ++v)
    for (int x = 0; x < 8; ++x) {
      double s = 0.0;
      for (int u = 0; u < 8; ++u) s += in[v * 8 + u] * b.c[u][x];
      tmp[v * 8 + x] = s;
    }
  for (int x = 0; x < 8; ++x)
    for (int y = 0; y < 8; ++y) {
      double s = 0.0;
      for (int v = 0; v < 8; ++v) s += tmp[v * 8 + x] * b.c[v][y];
      out[y * 8 + x] = s;
    }
}

}  // namespace

Image apply_blur(const Image& img, double sigma) {
  if (sigma < 0.0) {
    throw InvalidParameterError("apply_blur: sigma must be >= 0");
  }
  if (sigma == 0.0) return img;

  const long radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (long i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[i + radius] = v;
    sum += v;
  }
  for (double& v : k) v /= sum;

  const long h = static_cast<long>(img.height);
  const long w = static_cast<long>(img.width);
  Image tmp(img.height, img.width);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (long t = -radius; t <= radius; ++t)
          acc += k[t + radius] * img.data[(y * w + reflect(x + t, w)) * 3 + c];
        tmp.data[(y * w + x) * 3 + c] = acc;
      }
  Image out(img.height, img.width);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (long t = -radius; t <= radius; ++t)
          acc += k[t + radius] * tmp.data[(reflect(y + t, h) * w + x) * 3 + c];
        out.data[(y * w + x) * 3 + c] = acc;
      }
  return out;
}

Image apply_noise_snr(const Image& img, double snr_db, Rng& rng) {
  double power = 0.0;
  for (double v : img.data) power += v * v;
  power /= static_cast<double>(img.data.size());
  if (power <= 0.0) {
    throw InvalidInputError("apply_noise_snr: all-zero image has undefined SNR");
  }
  const double noise_var = power / std::pow(10.0, snr_db / 10.0);
  const double noise_std = std::sqrt(noise_var);
  Image out = img;
  for (double& v : out.data) {
    v = std::clamp(v + noise_std * rng.normal(), 0.0, 1.0);
  }
  return out;
}

Image apply_jpeg_like(const Image& img, int quality) {
  if (quality < 1 || quality > 100) {
    throw InvalidParameterError("apply_jpeg_like: quality must be in [1,100], got " +
                                std::to_string(quality));
  }
  const auto q = scaled_quant_table(quality);
  const long h = static_cast<long>(img.height);
  const long w = static_cast<long>(img.width);
  Image out(img.height, img.width);
  double block[64], coef[64], rec[64];
  for (int c = 0; c < 3; ++c) {
    for (long by = 0; by < h; by += 8) {
      for (long bx = 0; bx < w; bx += 8) {
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) {
            // Replicate-pad partial edge blocks.
            const long sy = std::min(by + y, h - 1);
            const long sx = std::min(bx + x, w - 1);
            block[y * 8 + x] = img.data[(sy * w + sx) * 3 + c] * 255.0 - 128.0;
          }
        dct8x8(block, coef);
        for (int i = 0; i < 64; ++i)
          coef[i] = std::round(coef[i] / q[i]) * q[i];
        idct8x8(coef, rec);
        for (int y = 0; y < 8 && by + y < h; ++y)
          for (int x = 0; x < 8 && bx + x < w; ++x)
            out.data[((by + y) * w + bx + x) * 3 + c] =
                std::clamp((rec[y * 8 + x] + 128.0) / 255.0, 0.0, 1.0);
      }
    }
  }
  return out;
}

Image apply_degradation(const Image& img, const DegradationSpec& spec, Rng& rng) {
  switch (spec.kind) {
    case DegradationKind::None:
      return img;
    case DegradationKind::Blur:
      return apply_blur(img, spec.blur_sigma);
    case DegradationKind::Noise:
      return apply_noise_snr(img, spec.snr_db, rng);
    case DegradationKind::Jpeg:
      return apply_jpeg_like(img, spec.jpeg_quality);
  }
  return img;
}

CurriculumProbs curriculum_probability(const CurriculumSchedule& schedule,
                                       std::size_t epoch) {
  if (epoch >= schedule.epochs_total) {
    throw InvalidParameterError("curriculum_probability: epoch " +
                                std::to_string(epoch) + " outside schedule of " +
                                std::to_string(schedule.epochs_total));
  }
  if (schedule.epochs_total <= 1) return {0.0, 0.0};
  const double t = static_cast<double>(epoch) /
                   static_cast<double>(schedule.epochs_total - 1);
  return {schedule.p_noise_max * t, schedule.p_jpeg_max * t};
}

}  // namespace morphdet
