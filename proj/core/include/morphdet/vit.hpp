#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>

#include "morphdet/autodiff.hpp"
#include "morphdet/image.hpp"
#include "morphdet/params.hpp"
#include "morphdet/rflora.hpp"

namespace morphdet {

struct ViTConfig {
  std::size_t image_size = 56;  // S_b
  std::size_t patch_size = 14;  // p
  std::size_t embed_dim = 64;   // D
  std::size_t depth = 6;        // L
  std::size_t heads = 4;
  double mlp_ratio = 4.0;

  std::size_t grid_side() const { return image_size / patch_size; }
  std::size_t n_patches() const { return grid_side() * grid_side(); }
  std::size_t head_dim() const { return embed_dim / heads; }
  std::size_t mlp_hidden() const {
    return static_cast<std::size_t>(mlp_ratio * static_cast<double>(embed_dim));
  }
  void validate() const;
};

// Token matrix plus the patch grid it lives on. No class or register tokens
// are ever created; only spatial patch tokens flow through the model.
struct TokenSequence {
  nn::VarPtr tokens;  // N x D
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
};

// Adapters active during encode: configuration plus the per-image gate node.
struct AdapterSet {
  RFLoRAConfig cfg;
  nn::VarPtr gate;  // 1x1
};

// Frozen backbone parameters, scaled-normal init from a fixed seed. Names:
// backbone.patch_embed.{w,b}, backbone.pos_embed,
// backbone.layer<i>.{ln1,ln2}.{gain,bias},
// backbone.layer<i>.attn.{wq,bq,wk,bk,wv,bv,wo,bo},
// backbone.layer<i>.mlp.{w1,b1,w2,b2}.
void init_backbone_params(nn::ParameterStore& store, const ViTConfig& cfg,
                          std::uint64_t seed);
std::size_t backbone_param_count(const ViTConfig& cfg);

// Flattens each p x p x 3 patch row-major, projects to D, adds positional
// encodings. The image must be exactly S_b x S_b.
TokenSequence tokenize(const ViTConfig& cfg, nn::ParamLeaves& leaves,
                       const Image& img);

// L pre-norm blocks (LN -> MHA -> add, LN -> GELU MLP -> add). When adapters
// are given, the Q/V projections of the last k layers become gated low-rank
// projections; everything else runs the frozen path.
TokenSequence encode(const ViTConfig& cfg, nn::ParamLeaves& leaves,
                     const TokenSequence& input,
                     const std::optional<AdapterSet>& adapters);

}  // namespace morphdet
