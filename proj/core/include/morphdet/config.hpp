#pragma once

#include <cstdint>
#include <string>

#include "morphdet/degrade.hpp"
#include "morphdet/losses.hpp"
#include "morphdet/model.hpp"
#include "morphdet/synth.hpp"

namespace morphdet {

// Everything a run needs; defaults follow the reference training setup
// (Adam lr 2e-4, weight decay 0.05, batch 8, accumulation 4, 40 epochs,
// EMA tau 0.999). Every field can be overridden from the config file.
struct RunConfig {
  ModelConfig model;
  LossWeights loss;
  nn::AdamConfig adam;
  std::size_t batch_size = 8;
  std::size_t grad_accum = 4;
  std::size_t epochs = 40;
  double ema_tau = 0.999;
  bool eval_with_ema = true;
  bool cosine_lr = false;
  bool use_rca = true;  // off: lambda_rca forced to 0
  CurriculumSchedule curriculum;
  double train_sigma_g_min = 0.6;
  double train_sigma_g_max = 1.6;
  // Curriculum degradation draws when the coin fires.
  double curriculum_snr_min = 20.0;
  double curriculum_snr_max = 35.0;
  int curriculum_jpeg_min = 50;
  int curriculum_jpeg_max = 95;

  SynthConfig synth;
  std::size_t train_bona = 1000;
  std::size_t train_morph = 1000;
  std::size_t test_bona = 250;
  std::size_t test_morph = 250;
  std::string train_manifest;  // overrides synthetic training data
  std::string eval_manifest;   // overrides synthetic evaluation data

  std::uint64_t seed = 7;
  double early_stop_eer = 0.0;  // > 0: stop once held-out mean EER <= value

  // Propagates the run seed into the head/data streams and reconciles
  // dependent toggles (no fusion -> no RCA). Call before use.
  void finalize();
};

// Plain-text "key = value" file; '#' starts a comment. Unknown keys are
// errors. See the README for the full key table.
RunConfig load_run_config(const std::string& path);
void save_run_config(const std::string& path, const RunConfig& cfg);

}  // namespace morphdet
