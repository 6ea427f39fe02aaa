#pragma once

#include <functional>
#include <string>
#include <vector>

#include "morphdet/params.hpp"

namespace morphdet::nn {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
};

struct GradCheckOptions {
  double h = 1e-5;
  // Scalars probed per tensor; large tensors are subsampled with an evenly
  // spaced stride so every region is represented.
  std::size_t max_per_tensor = 24;
  // Below this magnitude the analytic/numeric pair is compared absolutely.
  double small_grad_floor = 1e-6;
  double small_abs_tol = 1e-10;
};

// Central finite differences against the gradients currently stored in the
// trainable parameters. The caller runs forward+backward first; `loss_fn`
// must be a deterministic pure evaluation of the same loss. Frozen
// parameters are skipped. Throws NumericError if the loss goes non-finite.
GradCheckReport finite_diff_check(
    ParameterStore& store, const std::function<double(ParameterStore&)>& loss_fn,
    const GradCheckOptions& opts = {});

}  // namespace morphdet::nn
