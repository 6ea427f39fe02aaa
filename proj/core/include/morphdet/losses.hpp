#pragma once

#include <cstddef>
#include <vector>

#include "morphdet/autodiff.hpp"

namespace morphdet {

struct LossWeights {
  double lambda_mil = 0.6;
  double lambda_tv = 0.05;
  double lambda_rca = 0.05;
  double epsilon = 0.1;      // label smoothing
  double rho = 0.25;         // MIL top-k fraction
  double rca_quantile = 0.5;
  std::size_t warmup_epochs = 5;
  double rca_fallback_margin = 0.5;  // used when a batch has no morphs

  void validate() const;
};

// (1 - eps) y + eps/2.
double smoothed_target(int label, double epsilon);

// Label-smoothed binary cross-entropy on the classifier logit, stable form.
nn::VarPtr loss_main(const nn::VarPtr& logit, int label, double epsilon);

// Top-k instance pooling: k = max(1, floor(rho*N)); positive bags score the
// k largest logits, negative bags the k largest negated logits; then the
// same smoothed BCE.
nn::VarPtr loss_mil(const nn::VarPtr& logits, int label, double rho,
                    double epsilon);

// Anisotropic total variation of the patch-logit map, normalised by the
// token count.
nn::VarPtr loss_tv(const nn::VarPtr& logits, std::size_t grid_h,
                   std::size_t grid_w);

// Row-wise cosine distances between aligned and modulated tokens, in [0,2].
// Near-zero-norm rows produce 0 and set *degenerate_flag.
nn::VarPtr rca_distance(const nn::VarPtr& aligned, const nn::VarPtr& modulated,
                        bool* degenerate_flag = nullptr);

// mean_i[(1-y) d_i + y softplus(margin - d_i)], scaled by the warm-up w.
nn::VarPtr loss_rca(const nn::VarPtr& distances, int label, double margin,
                    double warmup);

// Interpolated empirical quantile of the pooled per-token distances of the
// batch's morph samples; falls back to `fallback` when the batch has none.
// The result is a detached constant.
double rca_margin(std::vector<double> morph_distances, double quantile,
                  double fallback);

// 0 at epoch 0, 1 at/after warmup_epochs, linear in between.
double warmup_factor(std::size_t epoch, std::size_t warmup_epochs);

// main + lambda_mil*mil + lambda_tv*tv + lambda_rca*rca_warmed, where
// rca_warmed already carries the warm-up factor. Throws NumericError naming
// the first non-finite component.
nn::VarPtr loss_total(const nn::VarPtr& main, const nn::VarPtr& mil,
                      const nn::VarPtr& tv, const nn::VarPtr& rca_warmed,
                      const LossWeights& weights);

}  // namespace morphdet
