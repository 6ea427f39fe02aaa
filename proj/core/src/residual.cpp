#include "morphdet/residual.hpp"

#include <algorithm>
#include <cmath>

#include "morphdet/errors.hpp"

namespace morphdet {

namespace {

// Symmetric (edge-inclusive) reflection: ... x1 x0 | x0 x1 ... xn-1 | xn-1 ...
// This convention conserves total mass under normalised symmetric kernels.
std::size_t reflect(long i, long n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return static_cast<std::size_t>(i);
}

std::vector<double> gaussian_kernel(double sigma) {
  const long radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (long i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[i + radius] = v;
    sum += v;
  }
  for (double& v : k) v /= sum;
  return k;
}

}  // namespace

GreyImage to_grey(const Image& img) {
  GreyImage out(img.height, img.width);
  for (std::size_t i = 0; i < img.pixels(); ++i) {
    const double* px = img.data.data() + 3 * i;
    const double y = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
    out.data[i] = std::clamp(y, 0.0, 1.0);
  }
  return out;
}

GreyImage gaussian_smooth(const GreyImage& img, double sigma) {
  if (!(sigma > 0.0)) {
    throw InvalidParameterError("gaussian_smooth: sigma must be > 0, got " +
                                std::to_string(sigma));
  }
  const std::vector<double> k = gaussian_kernel(sigma);
  const long radius = static_cast<long>(k.size() / 2);
  const long h = static_cast<long>(img.height);
  const long w = static_cast<long>(img.width);

  GreyImage tmp(img.height, img.width);
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      double acc = 0.0;
      for (long t = -radius; t <= radius; ++t)
        acc += k[t + radius] * img.data[y * w + reflect(x + t, w)];
      tmp.data[y * w + x] = acc;
    }
  }
  GreyImage out(img.height, img.width);
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      double acc = 0.0;
      for (long t = -radius; t <= radius; ++t)
        acc += k[t + radius] * tmp.data[reflect(y + t, h) * w + x];
      out.data[y * w + x] = acc;
    }
  }
  return out;
}

ResidualMap laplacian_magnitude(const GreyImage& img) {
  if (img.height < 3 || img.width < 3) {
    throw InvalidInputError("laplacian_magnitude: image must be at least 3x3");
  }
  const long h = static_cast<long>(img.height);
  const long w = static_cast<long>(img.width);
  ResidualMap out(img.height, img.width);
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      const double c = img.data[y * w + x];
      const double up = img.data[reflect(y - 1, h) * w + x];
      const double down = img.data[reflect(y + 1, h) * w + x];
      const double left = img.data[y * w + reflect(x - 1, w)];
      const double right = img.data[y * w + reflect(x + 1, w)];
      out.data[y * w + x] = std::abs(up + down + left + right - 4.0 * c);
    }
  }
  return out;
}

ResidualMap minmax_normalize(const ResidualMap& raw) {
  ResidualMap out(raw.height, raw.width);
  if (raw.data.empty()) return out;
  const auto [mn_it, mx_it] = std::minmax_element(raw.data.begin(), raw.data.end());
  const double mn = *mn_it, mx = *mx_it;
  if (mx == mn) {
    return out;  // constant map: no residual evidence
  }
  const double inv = 1.0 / (mx - mn);
  for (std::size_t i = 0; i < raw.data.size(); ++i)
    out.data[i] = (raw.data[i] - mn) * inv;
  return out;
}

ResidualDescriptors patch_stats(const ResidualMap& map, std::size_t patch) {
  if (patch == 0 || map.height % patch != 0 || map.width % patch != 0) {
    throw InvalidParameterError("patch_stats: map " + std::to_string(map.height) +
                                "x" + std::to_string(map.width) +
                                " not divisible by patch " + std::to_string(patch));
  }
  ResidualDescriptors d;
  d.grid_h = map.height / patch;
  d.grid_w = map.width / patch;
  const std::size_t n = d.n_patches();
  d.stats.resize(3 * n);
  const double m = static_cast<double>(patch * patch);
  for (std::size_t gy = 0; gy < d.grid_h; ++gy) {
    for (std::size_t gx = 0; gx < d.grid_w; ++gx) {
      double sum = 0.0, sum2 = 0.0;
      for (std::size_t py = 0; py < patch; ++py) {
        const double* row = map.data.data() + (gy * patch + py) * map.width + gx * patch;
        for (std::size_t px = 0; px < patch; ++px) {
          sum += row[px];
          sum2 += row[px] * row[px];
        }
      }
      const double mu = sum / m;
      const double energy = sum2 / m;
      const double var = std::max(0.0, energy - mu * mu);
      double* out = d.stats.data() + 3 * (gy * d.grid_w + gx);
      out[0] = mu;
      out[1] = var;
      out[2] = energy;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    d.mean[0] += d.stats[3 * i];
    d.mean[1] += d.stats[3 * i + 1];
    d.mean[2] += d.stats[3 * i + 2];
  }
  d.mean[0] /= static_cast<double>(n);
  d.mean[1] /= static_cast<double>(n);
  d.mean[2] /= static_cast<double>(n);
  return d;
}

ResidualMap residual_map(const Image& img, double sigma_g) {
  return minmax_normalize(laplacian_magnitude(gaussian_smooth(to_grey(img), sigma_g)));
}

ResidualDescriptors residual_descriptors(const Image& img, double sigma_g,
                                         std::size_t patch) {
  return patch_stats(residual_map(img, sigma_g), patch);
}

}  // namespace morphdet
