#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "morphdet/autodiff.hpp"
#include "morphdet/params.hpp"

namespace morphdet {

struct PoolingConfig {
  std::size_t n_queries = 4;  // M learned queries
  std::size_t heads = 8;      // H
  std::size_t d_k = 0;        // 0 -> embed dim
  std::size_t d_v = 0;        // 0 -> embed dim

  std::size_t dk(std::size_t d) const { return d_k ? d_k : d; }
  std::size_t dv(std::size_t d) const { return d_v ? d_v : d; }
};

// "pool.queries" [M,D], "pool.wq"/"pool.wk" [D,dk], "pool.wv" [D,dv],
// "pool.wo" [dv,dv]; "clf.w" [dv,1], "clf.b" [1,1]; "mil.w" [D,1],
// "mil.b" [1,1].
void init_pooling_params(nn::ParameterStore& store, std::size_t embed_dim,
                         const PoolingConfig& cfg, std::uint64_t seed);
void init_classifier_params(nn::ParameterStore& store, std::size_t d_v,
                            std::uint64_t seed);
void init_mil_params(nn::ParameterStore& store, std::size_t embed_dim,
                     std::uint64_t seed);

std::size_t pooling_param_count(std::size_t embed_dim, const PoolingConfig& cfg);
std::size_t classifier_param_count(std::size_t d_v);
std::size_t mil_param_count(std::size_t embed_dim);

// Multi-head scaled dot-product attention of the learned queries over the
// fused tokens; head outputs are concatenated, linearly projected, and the
// M query rows mean-combined into the single global vector (1 x d_v).
// When attn_out is given it receives the weights as heads*M rows of N_r
// values (head-major), for the interpretability dump.
nn::VarPtr cross_attention_pool(nn::ParamLeaves& leaves, const nn::VarPtr& tokens,
                                std::size_t embed_dim, const PoolingConfig& cfg,
                                std::vector<std::vector<double>>* attn_out = nullptr);

// z = w^T g + b, s = sigmoid(z); returns (logit, score), each 1x1.
std::pair<nn::VarPtr, nn::VarPtr> classify(nn::ParamLeaves& leaves,
                                           const nn::VarPtr& pooled);

// One logit per residual patch (N_r x 1). Training-only: calling it with
// training=false is a mode error.
nn::VarPtr mil_logits(nn::ParamLeaves& leaves, const nn::VarPtr& tokens,
                      bool training);

}  // namespace morphdet
