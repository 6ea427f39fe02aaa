#pragma once

#include <cstddef>
#include <vector>

#include "morphdet/image.hpp"

namespace morphdet {

// |Laplacian| response map; raw maps are non-negative, normalised maps lie
// in [0,1].
struct ResidualMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  ResidualMap() = default;
  ResidualMap(std::size_t h, std::size_t w) : height(h), width(w), data(h * w, 0.0) {}
  double& at(std::size_t y, std::size_t x) { return data[y * width + x]; }
  double at(std::size_t y, std::size_t x) const { return data[y * width + x]; }
};

// Per-patch (mean, variance, energy) rows plus their global mean.
struct ResidualDescriptors {
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  // n_patches x 3, row-major patch order; columns are (mu, var, energy).
  std::vector<double> stats;
  double mean[3] = {0.0, 0.0, 0.0};

  std::size_t n_patches() const { return grid_h * grid_w; }
  const double* row(std::size_t i) const { return stats.data() + 3 * i; }
};

// BT.601 luma weights (0.299, 0.587, 0.114); output clamped to [0,1].
GreyImage to_grey(const Image& img);

// Separable Gaussian, kernel radius ceil(3*sigma), renormalised to sum 1,
// symmetric (edge-inclusive) reflection at borders. sigma must be > 0.
GreyImage gaussian_smooth(const GreyImage& img, double sigma);

// |4-neighbour Laplacian| with the same reflection rule; needs >= 3x3 input.
ResidualMap laplacian_magnitude(const GreyImage& img);

// (r - min)/(max - min); a constant map yields all zeros.
ResidualMap minmax_normalize(const ResidualMap& raw);

// Non-overlapping p x p partition in row-major patch order; population
// variance over the p^2 samples. Dimensions must divide by p.
ResidualDescriptors patch_stats(const ResidualMap& map, std::size_t patch);

// Full branch: grey -> smooth(sigma_g) -> |laplacian| -> minmax -> stats.
ResidualDescriptors residual_descriptors(const Image& img, double sigma_g,
                                         std::size_t patch);

// Normalised residual map only (for PGM export / inspection).
ResidualMap residual_map(const Image& img, double sigma_g);

}  // namespace morphdet
