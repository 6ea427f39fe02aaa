#include "morphdet/model.hpp"

#include "morphdet/errors.hpp"
#include "morphdet/rng.hpp"

namespace morphdet {

using nn::VarPtr;

void ModelConfig::validate() const {
  vit.validate();
  if (lora.layers_adapted > vit.depth) {
    throw ConfigError("adapter depth k=" + std::to_string(lora.layers_adapted) +
                      " exceeds backbone depth " + std::to_string(vit.depth));
  }
  if (lora.enabled() && lora.rank == 0) {
    throw ConfigError("adapter rank must be positive when adapters are active");
  }
  if (gate_hidden == 0) throw ConfigError("gate hidden width must be positive");
}

void init_model_params(nn::ParameterStore& store, const ModelConfig& cfg) {
  cfg.validate();
  init_backbone_params(store, cfg.vit, cfg.backbone_seed);
  if (cfg.use_gate) {
    init_gate_params(store, cfg.gate_hidden, derive_seed(cfg.head_seed, 1));
  }
  if (cfg.lora.enabled()) {
    init_adapter_params(store, cfg.lora, cfg.vit.depth, cfg.vit.embed_dim,
                        derive_seed(cfg.head_seed, 2));
  }
  if (cfg.use_film) {
    init_film_params(store, cfg.vit.embed_dim, derive_seed(cfg.head_seed, 3));
  }
  init_pooling_params(store, cfg.vit.embed_dim, cfg.pool, derive_seed(cfg.head_seed, 4));
  init_classifier_params(store, cfg.pool.dv(cfg.vit.embed_dim),
                         derive_seed(cfg.head_seed, 5));
  init_mil_params(store, cfg.vit.embed_dim, derive_seed(cfg.head_seed, 6));
}

ParamCensus analytic_census(const ModelConfig& cfg) {
  ParamCensus c;
  c.backbone = backbone_param_count(cfg.vit);
  c.adapters = cfg.lora.enabled() ? adapter_param_count(cfg.lora, cfg.vit.embed_dim) : 0;
  c.gate = cfg.use_gate ? gate_param_count(cfg.gate_hidden) : 0;
  c.film = cfg.use_film ? film_param_count(cfg.vit.embed_dim) : 0;
  c.pooling = pooling_param_count(cfg.vit.embed_dim, cfg.pool);
  c.classifier = classifier_param_count(cfg.pool.dv(cfg.vit.embed_dim));
  c.mil = mil_param_count(cfg.vit.embed_dim);
  c.frozen = c.backbone;
  c.trainable = c.adapters + c.gate + c.film + c.pooling + c.classifier + c.mil;
  c.total = c.frozen + c.trainable;
  c.trainable_fraction =
      c.total ? static_cast<double>(c.trainable) / static_cast<double>(c.total) : 0.0;
  return c;
}

ParamCensus measured_census(const nn::ParameterStore& store) {
  ParamCensus c;
  for (const auto& p : store.all()) {
    const std::size_t n = p.value.numel();
    c.total += n;
    if (p.trainable) {
      c.trainable += n;
    } else {
      c.frozen += n;
    }
    if (p.name.rfind("backbone.", 0) == 0) c.backbone += n;
    else if (p.name.rfind("adapter.", 0) == 0) c.adapters += n;
    else if (p.name.rfind("gate.", 0) == 0) c.gate += n;
    else if (p.name.rfind("film.", 0) == 0) c.film += n;
    else if (p.name.rfind("pool.", 0) == 0) c.pooling += n;
    else if (p.name.rfind("clf.", 0) == 0) c.classifier += n;
    else if (p.name.rfind("mil.", 0) == 0) c.mil += n;
  }
  c.trainable_fraction =
      c.total ? static_cast<double>(c.trainable) / static_cast<double>(c.total) : 0.0;
  return c;
}

ForwardResult model_forward(const ModelConfig& cfg, nn::ParamLeaves& leaves,
                            const Image& img, const ResidualDescriptors& rd,
                            bool training,
                            std::vector<std::vector<double>>* attn_dump) {
  cfg.validate();
  TokenSequence tokens = tokenize(cfg.vit, leaves, img);

  VarPtr gate = cfg.use_gate ? residual_gate(leaves, rd.mean, cfg.gate_hidden)
                             : nn::scalar_const(0.5);
  std::optional<AdapterSet> adapters;
  if (cfg.lora.enabled()) adapters = AdapterSet{cfg.lora, gate};

  TokenSequence encoded = encode(cfg.vit, leaves, tokens, adapters);

  VarPtr aligned = align_tokens(encoded.tokens, encoded.grid_h, encoded.grid_w,
                                rd.grid_h, rd.grid_w);
  VarPtr modulated = aligned;
  if (cfg.use_film) {
    auto [gammas, betas] =
        film_params(leaves, descriptor_constant(rd), cfg.vit.embed_dim);
    modulated = modulate(aligned, gammas, betas);
  }

  VarPtr pooled =
      cross_attention_pool(leaves, modulated, cfg.vit.embed_dim, cfg.pool, attn_dump);
  auto [logit, score] = classify(leaves, pooled);

  ForwardResult result;
  result.logit = logit;
  result.score = score;
  result.aligned = aligned;
  result.modulated = modulated;
  result.gate_value = nn::scalar_value(gate);
  result.grid_h = rd.grid_h;
  result.grid_w = rd.grid_w;
  if (training) result.mil = mil_logits(leaves, modulated, true);
  return result;
}

}  // namespace morphdet
