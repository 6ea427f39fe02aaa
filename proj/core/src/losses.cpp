#include "morphdet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "morphdet/errors.hpp"

namespace morphdet {

using nn::VarPtr;

void LossWeights::validate() const {
  if (lambda_mil < 0 || lambda_tv < 0 || lambda_rca < 0) {
    throw InvalidParameterError("loss weights must be non-negative");
  }
  if (epsilon < 0.0 || epsilon >= 1.0) {
    throw InvalidParameterError("label smoothing must lie in [0,1)");
  }
  if (rho <= 0.0 || rho > 1.0) {
    throw InvalidParameterError("MIL fraction must lie in (0,1]");
  }
  if (rca_quantile <= 0.0 || rca_quantile >= 1.0) {
    throw InvalidParameterError("RCA quantile must lie in (0,1)");
  }
}

double smoothed_target(int label, double epsilon) {
  return (1.0 - epsilon) * static_cast<double>(label) + epsilon / 2.0;
}

VarPtr loss_main(const VarPtr& logit, int label, double epsilon) {
  return nn::bce_with_logits(logit, smoothed_target(label, epsilon));
}

VarPtr loss_mil(const VarPtr& logits, int label, double rho, double epsilon) {
  const std::size_t n = logits->value.rows();
  if (n == 0) throw InvalidInputError("loss_mil: empty logit set");
  const std::size_t k = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(rho * static_cast<double>(n))));

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  // Deterministic tie-break on index.
  if (label == 1) {
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      const double va = logits->value[a], vb = logits->value[b];
      return va != vb ? va > vb : a < b;
    });
  } else {
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      const double va = logits->value[a], vb = logits->value[b];
      return va != vb ? va < vb : a < b;
    });
  }
  idx.resize(k);

  // y=1: mean of the k largest logits; y=0: mean of the k largest negated
  // logits, i.e. minus the mean of the k smallest.
  VarPtr z = nn::mean_of_rows(logits, idx);
  if (label == 0) z = nn::scale(z, -1.0);
  return nn::bce_with_logits(z, smoothed_target(label, epsilon));
}

VarPtr loss_tv(const VarPtr& logits, std::size_t grid_h, std::size_t grid_w) {
  if (grid_h == 0 || grid_w == 0) {
    throw InvalidParameterError("loss_tv: empty grid");
  }
  return nn::tv_grid(logits, grid_h, grid_w);
}

VarPtr rca_distance(const VarPtr& aligned, const VarPtr& modulated,
                    bool* degenerate_flag) {
  return nn::cosine_row_distance(aligned, modulated, 1e-12, degenerate_flag);
}

VarPtr loss_rca(const VarPtr& distances, int label, double margin, double warmup) {
  if (warmup < 0.0 || warmup > 1.0) {
    throw InvalidParameterError("loss_rca: warm-up factor must lie in [0,1]");
  }
  VarPtr per_patch;
  if (label == 0) {
    per_patch = nn::mean_all(distances);
  } else {
    per_patch = nn::mean_all(
        nn::activation(nn::Act::Softplus, nn::affine(distances, -1.0, margin)));
  }
  return nn::scale(per_patch, warmup);
}

double rca_margin(std::vector<double> morph_distances, double quantile,
                  double fallback) {
  if (quantile <= 0.0 || quantile >= 1.0) {
    throw InvalidParameterError("rca_margin: quantile must lie in (0,1)");
  }
  if (morph_distances.empty()) return fallback;
  std::sort(morph_distances.begin(), morph_distances.end());
  const double pos = quantile * static_cast<double>(morph_distances.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, morph_distances.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return morph_distances[lo] + frac * (morph_distances[hi] - morph_distances[lo]);
}

double warmup_factor(std::size_t epoch, std::size_t warmup_epochs) {
  if (warmup_epochs == 0) return 1.0;
  return std::min(1.0, static_cast<double>(epoch) / static_cast<double>(warmup_epochs));
}

VarPtr loss_total(const VarPtr& main, const VarPtr& mil, const VarPtr& tv,
                  const VarPtr& rca_warmed, const LossWeights& weights) {
  weights.validate();
  auto check = [](const VarPtr& v, const char* name) {
    if (!v || v->value.numel() != 1 || !std::isfinite(v->value[0])) {
      throw NumericError(std::string("loss_total: non-finite component ") + name);
    }
  };
  check(main, "main");
  check(mil, "mil");
  check(tv, "tv");
  check(rca_warmed, "rca");
  VarPtr total = nn::add(main, nn::scale(mil, weights.lambda_mil));
  total = nn::add(total, nn::scale(tv, weights.lambda_tv));
  total = nn::add(total, nn::scale(rca_warmed, weights.lambda_rca));
  return total;
}

}  // namespace morphdet
