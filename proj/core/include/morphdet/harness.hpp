#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "morphdet/config.hpp"
#include "morphdet/metrics.hpp"
#include "morphdet/model.hpp"
#include "morphdet/synth.hpp"

namespace morphdet {

struct EpochLog {
  std::size_t epoch = 0;
  double total = 0.0;
  double main = 0.0;
  double mil = 0.0;
  double tv = 0.0;
  double rca = 0.0;  // warm-up already applied
  double warmup = 0.0;
  double margin = 0.0;  // mean batch margin over the epoch
};

struct TypeMetrics {
  std::string type;
  double eer = 0.0;
  double bscer1 = 0.0;
  double bscer5 = 0.0;
  double bscer10 = 0.0;
};

struct EvalReport {
  ScoreSet scores;
  std::vector<TypeMetrics> per_type;
  CIStat eer_ci, bscer1_ci, bscer5_ci, bscer10_ci;
  double pooled_eer = 0.0;
  double pooled_eer_threshold = 0.0;
};

struct LatencyReport {
  double residual_ms_mean = 0.0;
  double residual_ms_median = 0.0;
  double model_ms_mean = 0.0;
  double model_ms_median = 0.0;
  double residual_fraction = 0.0;  // residual / (residual + model), means
  std::size_t n_timed = 0;
};

struct RunReport {
  std::vector<EpochLog> epochs;
  ParamCensus census;
  std::uint64_t frozen_checksum_before = 0;
  std::uint64_t frozen_checksum_after = 0;
  bool stopped_early = false;
  std::size_t epochs_run = 0;
};

// Synthetic split layout: training indices start at 0, evaluation indices
// after them, so splits are disjoint by construction.
std::vector<LabeledSample> build_train_set(const RunConfig& cfg);
std::vector<LabeledSample> build_eval_set(const RunConfig& cfg);

// Full training loop: curriculum degradations, residual descriptors, forward,
// four-term loss with batch margin and warm-up, gradient accumulation, Adam,
// EMA. The store is initialised inside. Aborts with NumericError (naming the
// component) on a non-finite loss.
RunReport train_model(const RunConfig& cfg, nn::ParameterStore& store,
                      const std::vector<LabeledSample>& train,
                      const std::vector<LabeledSample>* held_out = nullptr);

// Scores every image with the inference path (no MIL head); per-morph-type
// and aggregate metrics with 95% CIs.
EvalReport evaluate_model(const RunConfig& cfg, const nn::ParameterStore& store,
                          const std::vector<LabeledSample>& samples,
                          bool use_ema);

struct SweepGrids {
  std::vector<double> blur_sigmas = {0.0, 1.0, 2.0, 3.0};
  std::vector<double> snr_dbs = {30.0, 20.0, 10.0, 5.0};
  std::vector<int> jpeg_qualities = {90, 70, 50, 30};
};

struct SweepRow {
  std::string condition;  // "clean", "blur s=1", ...
  CIStat eer;             // across morph types, percent
};

// Degrades the evaluation set per condition and re-evaluates; the clean
// condition is always included. All grids empty is an error.
std::vector<SweepRow> robustness_sweep(const RunConfig& cfg,
                                       const nn::ParameterStore& store,
                                       const std::vector<LabeledSample>& samples,
                                       const SweepGrids& grids);

// Batch-1 inference timing split into residual pre-processing and model
// forward; medians and means over `n_timed` runs after `n_warmup` warm-ups.
LatencyReport bench_latency(const RunConfig& cfg, const nn::ParameterStore& store,
                            std::size_t n_warmup = 30, std::size_t n_timed = 300);

// Known ablation variants: full, fusion_only, k0, k2, k3, k6, k12, q_only,
// v_only, rca_off, no_residual. Throws ConfigError on anything else or on
// contradictory results (e.g. k exceeding the backbone depth).
RunConfig apply_ablation_variant(RunConfig base, const std::string& variant);

struct AblationRow {
  std::string variant;
  std::uint64_t seed = 0;
  double eer = 0.0;  // mean over types
  double bscer1 = 0.0;
  double bscer5 = 0.0;
  double bscer10 = 0.0;
};

// One train+evaluate per (variant, seed) with shared data per seed.
std::vector<AblationRow> run_ablation(const RunConfig& base,
                                      const std::vector<std::string>& variants,
                                      const std::vector<std::uint64_t>& seeds);

// Artifact writers.
void write_loss_log_csv(const std::string& path, const std::vector<EpochLog>& log);
void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);
void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows);
void write_eval_report(const std::string& dir, const EvalReport& report);
std::string render_census(const ParamCensus& census);
// Closed-form census at the reference large-scale configuration, including
// the unresolved-rank reconciliation against the reported ~9.3M trainable
// parameters.
std::string render_paper_scale_report();

}  // namespace morphdet
