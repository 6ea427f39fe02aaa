#pragma once

#include <cstddef>
#include <cstdint>

#include "morphdet/autodiff.hpp"
#include "morphdet/params.hpp"

namespace morphdet {

// Low-rank adaptation of the attention Q/V projections in the final
// `layers_adapted` transformer layers, scaled per image by the residual gate.
struct RFLoRAConfig {
  std::size_t layers_adapted = 3;  // k
  std::size_t rank = 8;            // r
  double alpha = 2.0;              // update scale (16/r at desk defaults)
  bool adapt_q = true;
  bool adapt_v = true;

  bool enabled() const { return layers_adapted > 0 && (adapt_q || adapt_v); }
};

// Gate MLP parameters: "gate.w1" [3,h], "gate.b1" [1,h], "gate.w2" [h,1],
// "gate.b2" [1,1]. A and B factors live under
// "adapter.layer<l>.<q|v>.a" [D,r] and ".b" [r,D]; B starts at zero so the
// adapter is a no-op until trained.
void init_gate_params(nn::ParameterStore& store, std::size_t hidden,
                      std::uint64_t seed);
void init_adapter_params(nn::ParameterStore& store, const RFLoRAConfig& cfg,
                         std::size_t depth, std::size_t embed_dim,
                         std::uint64_t seed);

// g = sigmoid(W2 silu(W1 s_bar + b1) + b2); one scalar per image, shared by
// every adapted projection. Returns a 1x1 graph node.
nn::VarPtr residual_gate(nn::ParamLeaves& leaves, const double s_bar[3],
                         std::size_t hidden);

// tokens*W + alpha * g * (tokens*A)*B. W is the frozen projection; gradients
// reach A, B and (through g) the gate MLP only.
nn::VarPtr gated_projection(const nn::VarPtr& tokens, const nn::VarPtr& w,
                            const nn::VarPtr& a, const nn::VarPtr& b,
                            double alpha, const nn::VarPtr& gate);

// k * |projections| * 2*D*r.
std::size_t adapter_param_count(const RFLoRAConfig& cfg, std::size_t embed_dim);
// Gate MLP parameter count, reported separately from the adapters.
std::size_t gate_param_count(std::size_t hidden);

}  // namespace morphdet
