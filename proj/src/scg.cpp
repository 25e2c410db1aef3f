#include "matchfree/scg.hpp"

#include <algorithm>
#include <cmath>

#include "matchfree/errors.hpp"

namespace matchfree {

void ScgConfig::validate() const {
  if (!(rho > 0.0 && rho < 1.0)) throw ValidationError("scg rho must lie in (0, 1)");
  if (!(eps > 0.0)) throw ValidationError("scg eps must be positive");
}

std::size_t SparseCorr::row_support(std::size_t i) const {
  const std::size_t n = values.cols();
  return static_cast<std::size_t>(
      std::count_if(mask.begin() + i * n, mask.begin() + (i + 1) * n, [](auto m) { return m != 0; }));
}

Matrix row_max_filter(const Matrix& a) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    if (r.empty()) continue;
    const double mx = *std::max_element(r.begin(), r.end());
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (r[j] == mx) out(i, j) = r[j];
    }
  }
  return out;
}

std::vector<double> col_max(const Matrix& a_row) {
  std::vector<double> out(a_row.cols(), 0.0);
  for (std::size_t i = 0; i < a_row.rows(); ++i) {
    auto r = a_row.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (i == 0 || r[j] > out[j]) out[j] = r[j];
    }
  }
  return out;
}

SparseCorr sparsify(const Matrix& a, const std::vector<double>& a_max, const ScgConfig& cfg) {
  cfg.validate();
  if (a_max.size() != a.cols()) {
    throw ShapeError("sparsify: a_max has " + std::to_string(a_max.size()) + " entries for " +
                     a.shape_str());
  }
  SparseCorr s{Matrix(a.rows(), a.cols()), std::vector<std::uint8_t>(a.size(), 0)};
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      if (a_max[j] > 0.0 && a(i, j) >= cfg.rho * a_max[j]) {
        s.values(i, j) = a(i, j);
        s.mask[i * a.cols() + j] = 1;
      }
    }
  }
  return s;
}

namespace {

// Per-row divisor for the chosen norm mode; 1 for kNone.
double row_divisor(std::span<const double> r, const ScgConfig& cfg) {
  switch (cfg.norm) {
    case NormMode::kSum1: {
      double sum = 0.0;
      for (double v : r) sum += v;
      return sum + cfg.eps;
    }
    case NormMode::kMax:
      return (r.empty() ? 0.0 : *std::max_element(r.begin(), r.end())) + cfg.eps;
    case NormMode::kNone:
      break;
  }
  return 1.0;
}

}  // namespace

SparseCorr normalize(const SparseCorr& s, const ScgConfig& cfg) {
  cfg.validate();
  SparseCorr out = s;
  if (cfg.norm == NormMode::kNone) return out;
  for (std::size_t i = 0; i < s.values.rows(); ++i) {
    const double div = row_divisor(s.values.row(i), cfg);
    for (double& v : out.values.row(i)) v /= div;
  }
  return out;
}

ScgTrace sparse_correspondence(const Matrix& a, const ScgConfig& cfg) {
  cfg.validate();
  ScgTrace t;
  t.row_filtered = row_max_filter(a);
  t.a_max = col_max(t.row_filtered);
  t.tau.resize(t.a_max.size());
  for (std::size_t j = 0; j < t.a_max.size(); ++j) t.tau[j] = cfg.rho * t.a_max[j];
  t.sparse = sparsify(a, t.a_max, cfg);
  t.normalized = normalize(t.sparse, cfg);
  return t;
}

Matrix sparse_correspondence_backward(const ScgTrace& trace, const ScgConfig& cfg,
                                      const Matrix& d_hat) {
  const Matrix& x = trace.sparse.values;
  if (!d_hat.same_shape(x)) {
    throw ShapeError("scg backward: gradient " + d_hat.shape_str() + " vs " + x.shape_str());
  }
  const std::size_t n = x.cols();
  Matrix d_a(x.rows(), n);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto xr = x.row(i);
    auto gr = d_hat.row(i);
    auto out = d_a.row(i);
    switch (cfg.norm) {
      case NormMode::kNone:
        for (std::size_t j = 0; j < n; ++j) out[j] = gr[j];
        break;
      case NormMode::kSum1: {
        const double div = row_divisor(xr, cfg);
        double gx = 0.0;
        for (std::size_t j = 0; j < n; ++j) gx += gr[j] * xr[j];
        for (std::size_t j = 0; j < n; ++j) out[j] = gr[j] / div - gx / (div * div);
        break;
      }
      case NormMode::kMax: {
        if (n == 0) break;
        const double div = row_divisor(xr, cfg);
        double gx = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          out[j] = gr[j] / div;
          gx += gr[j] * xr[j];
        }
        const auto arg = static_cast<std::size_t>(std::max_element(xr.begin(), xr.end()) - xr.begin());
        out[arg] -= gx / (div * div);
        break;
      }
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (!trace.sparse.kept(i, j)) out[j] = 0.0;
    }
  }
  return d_a;
}

}  // namespace matchfree
