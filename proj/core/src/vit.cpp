#include "morphdet/vit.hpp"

#include <cmath>
#include <string>

#include "morphdet/errors.hpp"
#include "morphdet/rng.hpp"

namespace morphdet {

using nn::Tensor;
using nn::VarPtr;

namespace {

Tensor scaled_normal(std::vector<std::size_t> shape, double std, Rng& rng) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = std * rng.normal();
  return t;
}

std::string layer_prefix(std::size_t l) {
  return "backbone.layer" + std::to_string(l) + ".";
}

}  // namespace

void ViTConfig::validate() const {
  if (patch_size == 0 || image_size % patch_size != 0) {
    throw ConfigError("image size " + std::to_string(image_size) +
                      " not divisible by patch size " + std::to_string(patch_size));
  }
  if (heads == 0 || embed_dim % heads != 0) {
    throw ConfigError("embed dim " + std::to_string(embed_dim) +
                      " not divisible by heads " + std::to_string(heads));
  }
  if (depth == 0) throw ConfigError("backbone depth must be positive");
}

void init_backbone_params(nn::ParameterStore& store, const ViTConfig& cfg,
                          std::uint64_t seed) {
  cfg.validate();
  Rng rng(derive_seed(seed, 0xB0DE));
  const std::size_t d = cfg.embed_dim;
  const std::size_t patch_dim = cfg.patch_size * cfg.patch_size * 3;
  const double std_embed = 1.0 / std::sqrt(static_cast<double>(patch_dim));
  const double std_d = 1.0 / std::sqrt(static_cast<double>(d));
  const double std_h = 1.0 / std::sqrt(static_cast<double>(cfg.mlp_hidden()));

  store.add("backbone.patch_embed.w", scaled_normal({patch_dim, d}, std_embed, rng), false);
  store.add("backbone.patch_embed.b", Tensor::zeros({1, d}), false);
  store.add("backbone.pos_embed", scaled_normal({cfg.n_patches(), d}, 0.02, rng), false);
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    const std::string p = layer_prefix(l);
    store.add(p + "ln1.gain", Tensor::full({1, d}, 1.0), false);
    store.add(p + "ln1.bias", Tensor::zeros({1, d}), false);
    store.add(p + "attn.wq", scaled_normal({d, d}, std_d, rng), false);
    store.add(p + "attn.bq", Tensor::zeros({1, d}), false);
    store.add(p + "attn.wk", scaled_normal({d, d}, std_d, rng), false);
    store.add(p + "attn.bk", Tensor::zeros({1, d}), false);
    store.add(p + "attn.wv", scaled_normal({d, d}, std_d, rng), false);
    store.add(p + "attn.bv", Tensor::zeros({1, d}), false);
    store.add(p + "attn.wo", scaled_normal({d, d}, std_d, rng), false);
    store.add(p + "attn.bo", Tensor::zeros({1, d}), false);
    store.add(p + "ln2.gain", Tensor::full({1, d}, 1.0), false);
    store.add(p + "ln2.bias", Tensor::zeros({1, d}), false);
    store.add(p + "mlp.w1", scaled_normal({d, cfg.mlp_hidden()}, std_d, rng), false);
    store.add(p + "mlp.b1", Tensor::zeros({1, cfg.mlp_hidden()}), false);
    store.add(p + "mlp.w2", scaled_normal({cfg.mlp_hidden(), d}, std_h, rng), false);
    store.add(p + "mlp.b2", Tensor::zeros({1, d}), false);
  }
}

std::size_t backbone_param_count(const ViTConfig& cfg) {
  const std::size_t d = cfg.embed_dim;
  const std::size_t patch_dim = cfg.patch_size * cfg.patch_size * 3;
  const std::size_t h = cfg.mlp_hidden();
  std::size_t per_layer = 2 * (d + d)           // two layer norms
                          + 4 * (d * d + d)     // q, k, v, o projections
                          + (d * h + h) + (h * d + d);
  return patch_dim * d + d + cfg.n_patches() * d + cfg.depth * per_layer;
}

TokenSequence tokenize(const ViTConfig& cfg, nn::ParamLeaves& leaves,
                       const Image& img) {
  cfg.validate();
  if (img.height != cfg.image_size || img.width != cfg.image_size) {
    throw InvalidInputError("tokenize: image is " + std::to_string(img.height) +
                            "x" + std::to_string(img.width) + ", backbone expects " +
                            std::to_string(cfg.image_size) + "x" +
                            std::to_string(cfg.image_size));
  }
  const std::size_t p = cfg.patch_size;
  const std::size_t side = cfg.grid_side();
  const std::size_t n = cfg.n_patches();
  const std::size_t patch_dim = p * p * 3;
  Tensor patches({n, patch_dim});
  for (std::size_t gy = 0; gy < side; ++gy) {
    for (std::size_t gx = 0; gx < side; ++gx) {
      double* row = patches.data() + (gy * side + gx) * patch_dim;
      std::size_t o = 0;
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x)
          for (std::size_t c = 0; c < 3; ++c)
            row[o++] = img.at(gy * p + y, gx * p + x, c);
    }
  }
  VarPtr embedded = nn::dense(nn::constant(std::move(patches)),
                              leaves["backbone.patch_embed.w"],
                              leaves["backbone.patch_embed.b"]);
  VarPtr tokens = nn::add(embedded, leaves["backbone.pos_embed"]);
  return {tokens, side, side};
}

TokenSequence encode(const ViTConfig& cfg, nn::ParamLeaves& leaves,
                     const TokenSequence& input,
                     const std::optional<AdapterSet>& adapters) {
  cfg.validate();
  if (adapters) {
    if (adapters->cfg.layers_adapted > cfg.depth) {
      throw ConfigError("adapter set covers " +
                        std::to_string(adapters->cfg.layers_adapted) +
                        " layers but backbone has depth " +
                        std::to_string(cfg.depth));
    }
    if (!adapters->gate) throw ConfigError("adapter set has no gate node");
  }
  const std::size_t d = cfg.embed_dim;
  const std::size_t dh = cfg.head_dim();
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const std::size_t first_adapted =
      adapters && adapters->cfg.enabled() ? cfg.depth - adapters->cfg.layers_adapted
                                          : cfg.depth;

  VarPtr x = input.tokens;
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    const std::string p = layer_prefix(l);
    const bool adapt_here = adapters && adapters->cfg.enabled() && l >= first_adapted;

    VarPtr h = nn::layer_norm(x, leaves[p + "ln1.gain"], leaves[p + "ln1.bias"]);
    VarPtr q, v;
    if (adapt_here && adapters->cfg.adapt_q) {
      const std::string a = "adapter.layer" + std::to_string(l) + ".q.";
      q = nn::add_rowvec(gated_projection(h, leaves[p + "attn.wq"], leaves[a + "a"],
                                          leaves[a + "b"], adapters->cfg.alpha,
                                          adapters->gate),
                         leaves[p + "attn.bq"]);
    } else {
      q = nn::dense(h, leaves[p + "attn.wq"], leaves[p + "attn.bq"]);
    }
    VarPtr k = nn::dense(h, leaves[p + "attn.wk"], leaves[p + "attn.bk"]);
    if (adapt_here && adapters->cfg.adapt_v) {
      const std::string a = "adapter.layer" + std::to_string(l) + ".v.";
      v = nn::add_rowvec(gated_projection(h, leaves[p + "attn.wv"], leaves[a + "a"],
                                          leaves[a + "b"], adapters->cfg.alpha,
                                          adapters->gate),
                         leaves[p + "attn.bv"]);
    } else {
      v = nn::dense(h, leaves[p + "attn.wv"], leaves[p + "attn.bv"]);
    }

    std::vector<VarPtr> head_ctx;
    head_ctx.reserve(cfg.heads);
    for (std::size_t hd = 0; hd < cfg.heads; ++hd) {
      VarPtr qh = nn::slice_cols(q, hd * dh, dh);
      VarPtr kh = nn::slice_cols(k, hd * dh, dh);
      VarPtr vh = nn::slice_cols(v, hd * dh, dh);
      VarPtr attn = nn::softmax_rows(nn::scale(nn::matmul_bt(qh, kh), attn_scale));
      head_ctx.push_back(nn::matmul(attn, vh));
    }
    VarPtr attn_out = nn::dense(nn::concat_cols(head_ctx), leaves[p + "attn.wo"],
                                leaves[p + "attn.bo"]);
    x = nn::add(x, attn_out);

    VarPtr h2 = nn::layer_norm(x, leaves[p + "ln2.gain"], leaves[p + "ln2.bias"]);
    VarPtr m = nn::dense(
        nn::activation(nn::Act::Gelu,
                       nn::dense(h2, leaves[p + "mlp.w1"], leaves[p + "mlp.b1"])),
        leaves[p + "mlp.w2"], leaves[p + "mlp.b2"]);
    x = nn::add(x, m);
  }
  (void)d;
  return {x, input.grid_h, input.grid_w};
}

}  // namespace morphdet
