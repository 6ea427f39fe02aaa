#pragma once

#include <cstddef>

#include "morphdet/image.hpp"
#include "morphdet/rng.hpp"

namespace morphdet {

enum class DegradationKind { None, Blur, Noise, Jpeg };

struct DegradationSpec {
  DegradationKind kind = DegradationKind::None;
  double blur_sigma = 0.0;
  double snr_db = 30.0;
  int jpeg_quality = 90;
};

struct CurriculumSchedule {
  std::size_t epochs_total = 40;
  double p_noise_max = 0.3;
  double p_jpeg_max = 0.3;
};

// Per-channel Gaussian blur with the residual-pipeline kernel rules;
// sigma = 0 returns the input untouched.
Image apply_blur(const Image& img, double sigma);

// Adds zero-mean Gaussian noise with variance signal_power / 10^(snr/10),
// signal power measured on the clean image; clamps to [0,1] afterwards.
// All-zero images have no defined SNR and raise InvalidInputError.
Image apply_noise_snr(const Image& img, double snr_db, Rng& rng);

// Per-channel 8x8 DCT quantisation with the standard luminance table scaled
// by the quality factor; edge blocks replicate-padded. quality in [1,100].
Image apply_jpeg_like(const Image& img, int quality);

Image apply_degradation(const Image& img, const DegradationSpec& spec, Rng& rng);

// Linear ramp from (0,0) at epoch 0 to the maxima at the final epoch.
struct CurriculumProbs {
  double p_noise = 0.0;
  double p_jpeg = 0.0;
};
CurriculumProbs curriculum_probability(const CurriculumSchedule& schedule,
                                       std::size_t epoch);

}  // namespace morphdet
