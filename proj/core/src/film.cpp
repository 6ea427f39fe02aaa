#include "morphdet/film.hpp"

#include <cmath>

#include "morphdet/errors.hpp"
#include "morphdet/rng.hpp"

namespace morphdet {

using nn::Tensor;
using nn::VarPtr;

void init_film_params(nn::ParameterStore& store, std::size_t embed_dim,
                      std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xF17E));
  Tensor w1({3, kFilmHidden});
  const double std1 = 1.0 / std::sqrt(3.0);
  for (std::size_t i = 0; i < w1.numel(); ++i) w1[i] = std1 * rng.normal();
  store.add("film.w1", std::move(w1), true);
  store.add("film.b1", Tensor::zeros({1, kFilmHidden}), true);
  // Zero output head: modulation starts as the identity.
  store.add("film.w2", Tensor::zeros({kFilmHidden, 2 * embed_dim}), true);
  store.add("film.b2", Tensor::zeros({1, 2 * embed_dim}), true);
}

std::size_t film_param_count(std::size_t embed_dim) {
  return 3 * kFilmHidden + kFilmHidden + kFilmHidden * 2 * embed_dim + 2 * embed_dim;
}

VarPtr align_tokens(const VarPtr& tokens, std::size_t from_h, std::size_t from_w,
                    std::size_t to_h, std::size_t to_w) {
  if (from_h == 0 || from_w == 0 || to_h == 0 || to_w == 0) {
    throw InvalidParameterError("align_tokens: empty grid");
  }
  if (tokens->value.rows() != from_h * from_w) {
    throw ShapeError("align_tokens: token rows " + tokens->value.shape_str() +
                     " do not match grid " + std::to_string(from_h) + "x" +
                     std::to_string(from_w));
  }
  if (from_h == to_h && from_w == to_w) return tokens;

  // Corner-aligned bilinear resampling expressed as a constant matrix so the
  // backward pass comes for free.
  Tensor weights({to_h * to_w, from_h * from_w});
  auto src_coord = [](std::size_t i, std::size_t to_n, std::size_t from_n) {
    if (to_n == 1 || from_n == 1) return 0.0;
    return static_cast<double>(i) * static_cast<double>(from_n - 1) /
           static_cast<double>(to_n - 1);
  };
  for (std::size_t ty = 0; ty < to_h; ++ty) {
    const double sy = src_coord(ty, to_h, from_h);
    const std::size_t y0 = static_cast<std::size_t>(sy);
    const std::size_t y1 = std::min(y0 + 1, from_h - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t tx = 0; tx < to_w; ++tx) {
      const double sx = src_coord(tx, to_w, from_w);
      const std::size_t x0 = static_cast<std::size_t>(sx);
      const std::size_t x1 = std::min(x0 + 1, from_w - 1);
      const double fx = sx - static_cast<double>(x0);
      double* row = weights.data() + (ty * to_w + tx) * from_h * from_w;
      row[y0 * from_w + x0] += (1.0 - fy) * (1.0 - fx);
      row[y0 * from_w + x1] += (1.0 - fy) * fx;
      row[y1 * from_w + x0] += fy * (1.0 - fx);
      row[y1 * from_w + x1] += fy * fx;
    }
  }
  return nn::matmul(nn::constant(std::move(weights)), tokens);
}

std::pair<VarPtr, VarPtr> film_params(nn::ParamLeaves& leaves, const VarPtr& stats,
                                      std::size_t embed_dim) {
  VarPtr h = nn::activation(nn::Act::Silu,
                            nn::dense(stats, leaves["film.w1"], leaves["film.b1"]));
  VarPtr gb = nn::dense(h, leaves["film.w2"], leaves["film.b2"]);
  VarPtr gammas = nn::slice_cols(gb, 0, embed_dim);
  VarPtr betas = nn::slice_cols(gb, embed_dim, embed_dim);
  return {gammas, betas};
}

VarPtr modulate(const VarPtr& aligned, const VarPtr& gammas, const VarPtr& betas) {
  nn::require_same_shape(aligned->value, gammas->value, "modulate");
  nn::require_same_shape(aligned->value, betas->value, "modulate");
  VarPtr scale = nn::affine(nn::activation(nn::Act::Tanh, gammas), 1.0, 1.0);
  return nn::add(nn::mul(scale, aligned), betas);
}

VarPtr descriptor_constant(const ResidualDescriptors& rd) {
  return nn::constant(Tensor({rd.n_patches(), 3}, rd.stats));
}

}  // namespace morphdet
