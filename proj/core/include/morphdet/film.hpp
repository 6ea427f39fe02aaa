#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>

#include "morphdet/autodiff.hpp"
#include "morphdet/params.hpp"
#include "morphdet/residual.hpp"

namespace morphdet {

inline constexpr std::size_t kFilmHidden = 128;

// Shared modulation MLP: "film.w1" [3,128], "film.b1" [1,128],
// "film.w2" [128,2D], "film.b2" [1,2D]. The output head starts at zero so
// modulation begins as the identity.
void init_film_params(nn::ParameterStore& store, std::size_t embed_dim,
                      std::uint64_t seed);
std::size_t film_param_count(std::size_t embed_dim);

// Identity when grids match (the default: backbone and residual branch share
// p and S_b); otherwise channelwise bilinear interpolation of the token grid
// onto the residual grid, corners aligned.
nn::VarPtr align_tokens(const nn::VarPtr& tokens, std::size_t from_h,
                        std::size_t from_w, std::size_t to_h, std::size_t to_w);

// h_i = silu(W1 s_i + b1); [gamma_i, beta_i] = W2 h_i + b2, one network
// shared across all patches. `stats` is the constant N_r x 3 descriptor
// matrix; returns (gammas, betas), each N_r x D.
std::pair<nn::VarPtr, nn::VarPtr> film_params(nn::ParamLeaves& leaves,
                                              const nn::VarPtr& stats,
                                              std::size_t embed_dim);

// t_hat = (1 + tanh(gamma)) . t' + beta; channel scale stays in (0,2).
nn::VarPtr modulate(const nn::VarPtr& aligned, const nn::VarPtr& gammas,
                    const nn::VarPtr& betas);

// Residual descriptor matrix as a constant graph input (no gradient flows
// into the hand-crafted branch).
nn::VarPtr descriptor_constant(const ResidualDescriptors& rd);

}  // namespace morphdet
