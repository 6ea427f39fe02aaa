#include "morphdet/rflora.hpp"

#include <cmath>
#include <string>

#include "morphdet/errors.hpp"
#include "morphdet/rng.hpp"
#include "morphdet/tensor.hpp"

namespace morphdet {

using nn::Tensor;
using nn::VarPtr;

namespace {

Tensor scaled_normal(std::vector<std::size_t> shape, double std, Rng& rng) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = std * rng.normal();
  return t;
}

}  // namespace

void init_gate_params(nn::ParameterStore& store, std::size_t hidden,
                      std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x6A7E));
  store.add("gate.w1", scaled_normal({3, hidden}, 1.0 / std::sqrt(3.0), rng), true);
  store.add("gate.b1", Tensor::zeros({1, hidden}), true);
  store.add("gate.w2",
            scaled_normal({hidden, 1}, 1.0 / std::sqrt(static_cast<double>(hidden)), rng),
            true);
  store.add("gate.b2", Tensor::zeros({1, 1}), true);
}

void init_adapter_params(nn::ParameterStore& store, const RFLoRAConfig& cfg,
                         std::size_t depth, std::size_t embed_dim,
                         std::uint64_t seed) {
  if (cfg.layers_adapted > depth) {
    throw ConfigError("adapter layer count " + std::to_string(cfg.layers_adapted) +
                      " exceeds backbone depth " + std::to_string(depth));
  }
  if (!cfg.enabled()) return;
  Rng rng(derive_seed(seed, 0x10FA));
  const double std = 1.0 / std::sqrt(static_cast<double>(embed_dim));
  for (std::size_t l = depth - cfg.layers_adapted; l < depth; ++l) {
    const std::string base = "adapter.layer" + std::to_string(l) + ".";
    if (cfg.adapt_q) {
      store.add(base + "q.a", scaled_normal({embed_dim, cfg.rank}, std, rng), true);
      store.add(base + "q.b", Tensor::zeros({cfg.rank, embed_dim}), true);
    }
    if (cfg.adapt_v) {
      store.add(base + "v.a", scaled_normal({embed_dim, cfg.rank}, std, rng), true);
      store.add(base + "v.b", Tensor::zeros({cfg.rank, embed_dim}), true);
    }
  }
}

VarPtr residual_gate(nn::ParamLeaves& leaves, const double s_bar[3],
                     std::size_t /*hidden*/) {
  Tensor s({1, 3}, {s_bar[0], s_bar[1], s_bar[2]});
  VarPtr x = nn::constant(std::move(s));
  VarPtr h = nn::activation(nn::Act::Silu,
                            nn::dense(x, leaves["gate.w1"], leaves["gate.b1"]));
  VarPtr z = nn::dense(h, leaves["gate.w2"], leaves["gate.b2"]);
  return nn::activation(nn::Act::Sigmoid, z);
}

VarPtr gated_projection(const VarPtr& tokens, const VarPtr& w, const VarPtr& a,
                        const VarPtr& b, double alpha, const VarPtr& gate) {
  VarPtr frozen = nn::matmul(tokens, w);
  VarPtr update = nn::matmul(nn::matmul(tokens, a), b);
  return nn::add(frozen, nn::mul_scalar(nn::scale(update, alpha), gate));
}

std::size_t adapter_param_count(const RFLoRAConfig& cfg, std::size_t embed_dim) {
  const std::size_t projections =
      (cfg.adapt_q ? 1u : 0u) + (cfg.adapt_v ? 1u : 0u);
  return cfg.layers_adapted * projections * 2 * embed_dim * cfg.rank;
}

std::size_t gate_param_count(std::size_t hidden) {
  return 3 * hidden + hidden + hidden + 1;
}

}  // namespace morphdet
