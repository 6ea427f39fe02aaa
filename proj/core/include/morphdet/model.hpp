#pragma once

#include <cstdint>
#include <vector>

#include "morphdet/film.hpp"
#include "morphdet/image.hpp"
#include "morphdet/params.hpp"
#include "morphdet/pooling.hpp"
#include "morphdet/residual.hpp"
#include "morphdet/rflora.hpp"
#include "morphdet/vit.hpp"

namespace morphdet {

// Full detector: frozen backbone + residual-gated adapters + FiLM fusion +
// attention pooling + classifier (+ training-only MIL head).
struct ModelConfig {
  ViTConfig vit;
  RFLoRAConfig lora;
  PoolingConfig pool;
  std::size_t gate_hidden = 16;
  bool use_gate = true;  // false: the adapter gate is pinned to 0.5
  bool use_film = true;  // false: tokens pass to pooling unmodulated
  double eval_sigma_g = 1.0;
  std::uint64_t backbone_seed = 0xB0DE5EEDULL;
  std::uint64_t head_seed = 1;

  void validate() const;
};

// Creation order (backbone, gate, adapters, film, pooling, classifier, MIL)
// is fixed so checkpoints are byte-stable. Modules toggled off are not
// created at all.
void init_model_params(nn::ParameterStore& store, const ModelConfig& cfg);

struct ParamCensus {
  std::size_t total = 0;
  std::size_t trainable = 0;
  std::size_t frozen = 0;
  std::size_t backbone = 0;
  std::size_t adapters = 0;
  std::size_t gate = 0;
  std::size_t film = 0;
  std::size_t pooling = 0;
  std::size_t classifier = 0;
  std::size_t mil = 0;
  double trainable_fraction = 0.0;
};

// Closed-form counts from the module formulas.
ParamCensus analytic_census(const ModelConfig& cfg);
// Counts from an actual store, grouped by name prefix.
ParamCensus measured_census(const nn::ParameterStore& store);

struct ForwardResult {
  nn::VarPtr logit;      // 1x1
  nn::VarPtr score;      // 1x1, sigmoid(logit)
  nn::VarPtr mil;        // N_r x 1; null outside training
  nn::VarPtr aligned;    // T' on the residual grid
  nn::VarPtr modulated;  // T-hat after FiLM (== aligned when fusion is off)
  double gate_value = 0.5;
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
};

// Builds the forward graph for one image. The residual descriptors enter as
// constants: no gradient reaches the hand-crafted branch.
ForwardResult model_forward(const ModelConfig& cfg, nn::ParamLeaves& leaves,
                            const Image& img, const ResidualDescriptors& rd,
                            bool training,
                            std::vector<std::vector<double>>* attn_dump = nullptr);

}  // namespace morphdet
