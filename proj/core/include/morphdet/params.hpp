#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "morphdet/autodiff.hpp"
#include "morphdet/tensor.hpp"

namespace morphdet::nn {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;  // same shape, zero-initialised
  bool trainable = true;
};

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;  // decoupled
};

// Named tensors with trainable/frozen flags plus per-trainable Adam moments
// and EMA shadows. Insertion order is preserved so checkpoints are
// byte-stable.
class ParameterStore {
 public:
  Parameter& add(std::string name, Tensor value, bool trainable);
  bool contains(std::string_view name) const;
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }

  std::size_t total_count() const;
  std::size_t trainable_count() const;

  void zero_grads();

  // Bias-corrected Adam with decoupled weight decay; frozen parameters are
  // never touched. Throws NumericError on non-finite gradients.
  void adam_step(const AdamConfig& cfg);
  std::size_t adam_steps_taken() const { return adam_t_; }

  // shadow <- tau*shadow + (1-tau)*value for trainable parameters. The first
  // call initialises shadows to the current values.
  void ema_init();
  void ema_update(double tau);
  bool ema_ready() const { return ema_ready_; }
  const Tensor& ema_shadow(std::string_view name) const;

  // Copy with EMA shadows substituted for trainable parameter values.
  ParameterStore with_ema_values() const;

  // FNV-1a over the raw bytes of every frozen parameter (freeze auditing).
  std::uint64_t frozen_checksum() const;

  // Checkpoint format: magic "MDCP", version byte, little-endian record list
  // of (name, shape, float64 data); EMA shadows stored under "ema:<name>".
  void save_checkpoint(const std::string& path) const;
  // Loads values (and shadows) into an existing store with identical
  // names/shapes; throws ConfigError on mismatch.
  void load_checkpoint(const std::string& path);

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
  // Adam state per trainable parameter, keyed by store index.
  std::unordered_map<std::size_t, Tensor> adam_m_;
  std::unordered_map<std::size_t, Tensor> adam_v_;
  std::size_t adam_t_ = 0;
  std::unordered_map<std::size_t, Tensor> ema_;
  bool ema_ready_ = false;
};

// Per-graph cache of leaf nodes for a store: one shared leaf per parameter,
// so every use within a forward pass accumulates into the same gradient.
class ParamLeaves {
 public:
  // with_grad=false builds a value-only (inference) graph.
  ParamLeaves(ParameterStore& store, bool with_grad)
      : store_(&store), with_grad_(with_grad) {}

  VarPtr operator[](std::string_view name);

  // Adds the accumulated leaf gradients onto the store's trainable grads.
  void flush_grads();

 private:
  ParameterStore* store_;
  bool with_grad_;
  std::unordered_map<std::string, std::pair<VarPtr, Parameter*>> leaves_;
};

}  // namespace morphdet::nn
