#include "morphdet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "morphdet/errors.hpp"

namespace morphdet::nn {

GradCheckReport finite_diff_check(
    ParameterStore& store, const std::function<double(ParameterStore&)>& loss_fn,
    const GradCheckOptions& opts) {
  GradCheckReport report;
  for (auto& p : store.all()) {
    if (!p.trainable) continue;
    GradCheckEntry entry;
    entry.name = p.name;
    const std::size_t n = p.value.numel();
    const std::size_t count = std::min(n, opts.max_per_tensor);
    const std::size_t stride = std::max<std::size_t>(1, n / count);
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t i = std::min(k * stride, n - 1);
      const double saved = p.value[i];
      p.value[i] = saved + opts.h;
      const double fp = loss_fn(store);
      p.value[i] = saved - opts.h;
      const double fm = loss_fn(store);
      p.value[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw NumericError("finite_diff_check: non-finite loss while probing " +
                           p.name);
      }
      const double numeric = (fp - fm) / (2.0 * opts.h);
      const double analytic = p.grad[i];
      const double scale = std::max(std::abs(analytic), std::abs(numeric));
      double rel;
      if (scale < opts.small_grad_floor) {
        rel = std::abs(analytic - numeric) <= opts.small_abs_tol ? 0.0
              : std::abs(analytic - numeric) / opts.small_grad_floor;
      } else {
        rel = std::abs(analytic - numeric) / scale;
      }
      entry.max_rel_error = std::max(entry.max_rel_error, rel);
      ++entry.checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace morphdet::nn
