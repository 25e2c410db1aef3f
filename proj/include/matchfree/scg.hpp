#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "matchfree/matrix.hpp"

namespace matchfree {

enum class NormMode { kNone, kSum1, kMax };

struct ScgConfig {
  double rho = 0.5;   // sparsity factor, in (0, 1)
  double eps = 1e-8;  // normalization guard
  NormMode norm = NormMode::kSum1;

  void validate() const;
  friend bool operator==(const ScgConfig&, const ScgConfig&) = default;
};

// Sparse correspondence: values are zero wherever mask is false.
struct SparseCorr {
  Matrix values;
  std::vector<std::uint8_t> mask;  // row-major, same shape as values

  bool kept(std::size_t i, std::size_t j) const { return mask[i * values.cols() + j] != 0; }
  std::size_t row_support(std::size_t i) const;
};

// Keeps each row's maximal entries (all ties), zeroes the rest.
Matrix row_max_filter(const Matrix& a);

// Per-column maximum; an all-zero vector of length N when there are no rows.
std::vector<double> col_max(const Matrix& a_row);

// Keeps A(i, j) iff a_max[j] > 0 and A(i, j) >= rho * a_max[j]. The
// comparison runs against the original dense A.
SparseCorr sparsify(const Matrix& a, const std::vector<double>& a_max, const ScgConfig& cfg);

// Row normalization per cfg.norm; all-zero rows stay zero.
SparseCorr normalize(const SparseCorr& s, const ScgConfig& cfg);

// Every intermediate of the sparse correspondence generation, kept for
// diagnostics and for the backward pass.
struct ScgTrace {
  Matrix row_filtered;
  std::vector<double> a_max;
  std::vector<double> tau;
  SparseCorr sparse;      // before normalization
  SparseCorr normalized;  // final A-hat
};

ScgTrace sparse_correspondence(const Matrix& a, const ScgConfig& cfg);

// Gradient of the normalized output with respect to the dense A, treating the
// selection mask as constant.
Matrix sparse_correspondence_backward(const ScgTrace& trace, const ScgConfig& cfg,
                                      const Matrix& d_hat);

}  // namespace matchfree
