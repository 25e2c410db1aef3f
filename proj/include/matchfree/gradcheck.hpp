#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

namespace matchfree {

struct GradCheckOptions {
  double step = 1e-5;
  // Denominator floor for the relative error, so entries whose true gradient
  // is ~0 are judged on absolute error instead of amplifying rounding noise.
  double scale_floor = 1e-3;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;

  bool passed(double tol) const { return max_rel_error <= tol; }
  // Folds another report into this one (worst index is then not meaningful).
  void merge(const GradCheckReport& other);
};

// rel = |a - n| / max(|a|, |n|, scale_floor)
double relative_error(double analytic, double numeric, double scale_floor);

// Central differences of `loss` with respect to every entry addressed by
// `params`, compared to `analytic` (same length). Each entry is restored after
// probing. Throws EvaluationError if the loss is non-finite.
GradCheckReport gradcheck(const std::function<double()>& loss, std::span<double* const> params,
                          std::span<const double> analytic, const GradCheckOptions& opts = {});

// Convenience overload for one contiguous buffer.
GradCheckReport gradcheck(const std::function<double()>& loss, std::span<double> params,
                          std::span<const double> analytic, const GradCheckOptions& opts = {});

}  // namespace matchfree
