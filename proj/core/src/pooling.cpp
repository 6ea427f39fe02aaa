#include "morphdet/pooling.hpp"

#include <cmath>

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

void validate(std::size_t embed_dim, const PoolingConfig& cfg) {
  const std::size_t dk = cfg.dk(embed_dim), dv = cfg.dv(embed_dim);
  if (cfg.heads == 0 || dk % cfg.heads != 0 || dv % cfg.heads != 0) {
    throw ConfigError("pooling dims (dk=" + std::to_string(dk) +
                      ", dv=" + std::to_string(dv) + ") not divisible by " +
                      std::to_string(cfg.heads) + " heads");
  }
  if (cfg.n_queries == 0) throw ConfigError("pooling needs at least one query");
}

}  // namespace

void init_pooling_params(nn::ParameterStore& store, std::size_t embed_dim,
                         const PoolingConfig& cfg, std::uint64_t seed) {
  validate(embed_dim, cfg);
  Rng rng(derive_seed(seed, 0x4001));
  const std::size_t dk = cfg.dk(embed_dim), dv = cfg.dv(embed_dim);
  const double std_d = 1.0 / std::sqrt(static_cast<double>(embed_dim));
  const double std_v = 1.0 / std::sqrt(static_cast<double>(dv));
  store.add("pool.queries", scaled_normal({cfg.n_queries, embed_dim}, 0.02, rng), true);
  store.add("pool.wq", scaled_normal({embed_dim, dk}, std_d, rng), true);
  store.add("pool.wk", scaled_normal({embed_dim, dk}, std_d, rng), true);
  store.add("pool.wv", scaled_normal({embed_dim, dv}, std_d, rng), true);
  store.add("pool.wo", scaled_normal({dv, dv}, std_v, rng), true);
}

void init_classifier_params(nn::ParameterStore& store, std::size_t d_v,
                            std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xC1F5));
  store.add("clf.w",
            scaled_normal({d_v, 1}, 1.0 / std::sqrt(static_cast<double>(d_v)), rng),
            true);
  store.add("clf.b", Tensor::zeros({1, 1}), true);
}

void init_mil_params(nn::ParameterStore& store, std::size_t embed_dim,
                     std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x311D));
  store.add("mil.w",
            scaled_normal({embed_dim, 1}, 1.0 / std::sqrt(static_cast<double>(embed_dim)), rng),
            true);
  store.add("mil.b", Tensor::zeros({1, 1}), true);
}

std::size_t pooling_param_count(std::size_t embed_dim, const PoolingConfig& cfg) {
  const std::size_t dk = cfg.dk(embed_dim), dv = cfg.dv(embed_dim);
  return cfg.n_queries * embed_dim + 2 * embed_dim * dk + embed_dim * dv + dv * dv;
}

std::size_t classifier_param_count(std::size_t d_v) { return d_v + 1; }

std::size_t mil_param_count(std::size_t embed_dim) { return embed_dim + 1; }

VarPtr cross_attention_pool(nn::ParamLeaves& leaves, const VarPtr& tokens,
                            std::size_t embed_dim, const PoolingConfig& cfg,
                            std::vector<std::vector<double>>* attn_out) {
  validate(embed_dim, cfg);
  if (tokens->value.rows() < 1) {
    throw InvalidInputError("cross_attention_pool: no tokens");
  }
  const std::size_t dk = cfg.dk(embed_dim), dv = cfg.dv(embed_dim);
  const std::size_t dkh = dk / cfg.heads, dvh = dv / cfg.heads;
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dkh));

  VarPtr keys = nn::matmul(tokens, leaves["pool.wk"]);
  VarPtr values = nn::matmul(tokens, leaves["pool.wv"]);
  VarPtr queries = nn::matmul(leaves["pool.queries"], leaves["pool.wq"]);

  std::vector<VarPtr> head_ctx;
  head_ctx.reserve(cfg.heads);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    VarPtr qh = nn::slice_cols(queries, h * dkh, dkh);
    VarPtr kh = nn::slice_cols(keys, h * dkh, dkh);
    VarPtr vh = nn::slice_cols(values, h * dvh, dvh);
    VarPtr attn = nn::softmax_rows(nn::scale(nn::matmul_bt(qh, kh), attn_scale));
    if (attn_out) {
      const std::size_t n = attn->value.cols();
      for (std::size_t m = 0; m < cfg.n_queries; ++m) {
        std::vector<double> row(n);
        for (std::size_t i = 0; i < n; ++i) row[i] = attn->value.at(m, i);
        attn_out->push_back(std::move(row));
      }
    }
    head_ctx.push_back(nn::matmul(attn, vh));
  }
  VarPtr projected = nn::matmul(nn::concat_cols(head_ctx), leaves["pool.wo"]);
  return nn::mean_rows(projected);
}

std::pair<VarPtr, VarPtr> classify(nn::ParamLeaves& leaves, const VarPtr& pooled) {
  VarPtr z = nn::dense(pooled, leaves["clf.w"], leaves["clf.b"]);
  VarPtr s = nn::activation(nn::Act::Sigmoid, z);
  return {z, s};
}

VarPtr mil_logits(nn::ParamLeaves& leaves, const VarPtr& tokens, bool training) {
  if (!training) {
    throw ConfigError("mil_logits: MIL head is training-only and was called in inference mode");
  }
  return nn::dense(tokens, leaves["mil.w"], leaves["mil.b"]);
}

}  // namespace morphdet
