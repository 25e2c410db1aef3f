#include "matchfree/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "matchfree/errors.hpp"

namespace matchfree {

void GradCheckReport::merge(const GradCheckReport& other) {
  if (other.max_rel_error > max_rel_error) {
    max_rel_error = other.max_rel_error;
    worst_analytic = other.worst_analytic;
    worst_numeric = other.worst_numeric;
    worst_index = other.worst_index;
  }
  max_abs_error = std::max(max_abs_error, other.max_abs_error);
  checked += other.checked;
}

double relative_error(double analytic, double numeric, double scale_floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), scale_floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport gradcheck(const std::function<double()>& loss, std::span<double* const> params,
                          std::span<const double> analytic, const GradCheckOptions& opts) {
  if (!(opts.step > 0.0)) throw ValidationError("gradcheck: step must be positive");
  if (params.size() != analytic.size()) {
    throw ShapeError("gradcheck: " + std::to_string(params.size()) + " params but " +
                     std::to_string(analytic.size()) + " analytic entries");
  }
  auto eval = [&] {
    const double v = loss();
    if (!std::isfinite(v)) throw EvaluationError("gradcheck: loss is not finite");
    return v;
  };
  eval();

  GradCheckReport report;
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& theta = *params[i];
    const double saved = theta;
    theta = saved + opts.step;
    const double up = eval();
    theta = saved - opts.step;
    const double down = eval();
    theta = saved;
    const double numeric = (up - down) / (2.0 * opts.step);
    const double rel = relative_error(analytic[i], numeric, opts.scale_floor);
    report.max_abs_error = std::max(report.max_abs_error, std::abs(analytic[i] - numeric));
    if (report.checked == 0 || rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
      report.worst_analytic = analytic[i];
      report.worst_numeric = numeric;
    }
    ++report.checked;
  }
  return report;
}

GradCheckReport gradcheck(const std::function<double()>& loss, std::span<double> params,
                          std::span<const double> analytic, const GradCheckOptions& opts) {
  std::vector<double*> ptrs;
  ptrs.reserve(params.size());
  for (double& p : params) ptrs.push_back(&p);
  return gradcheck(loss, std::span<double* const>(ptrs), analytic, opts);
}

}  // namespace matchfree
