#include "matchfree/hungarian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "matchfree/errors.hpp"

namespace matchfree {

namespace {

void check_finite(const Matrix& cost) {
  if (!cost.all_finite()) throw ValidationError("assignment cost matrix has non-finite entries");
}

// Shortest augmenting path with row/column potentials. Requires rows <= cols.
// Returns the column assigned to each row.
std::vector<std::size_t> solve_rows_le_cols(const Matrix& a) {
  const std::size_t n = a.rows();
  const std::size_t m = a.cols();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based potentials; column 0 is the virtual source.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<std::size_t> owner(m + 1, 0), way(m + 1, 0);
  std::vector<char> used(m + 1);

  for (std::size_t i = 1; i <= n; ++i) {
    owner[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = owner[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        // Strict comparison keeps the lowest column index on ties.
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<std::size_t> row_to_col(n, 0);
  for (std::size_t j = 1; j <= m; ++j) {
    if (owner[j] != 0) row_to_col[owner[j] - 1] = j - 1;
  }
  return row_to_col;
}

}  // namespace

double assignment_cost(const Matrix& cost, const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  double total = 0.0;
  for (const auto& [i, j] : pairs) total += cost(i, j);
  return total;
}

Assignment hungarian_match(const Matrix& cost, HungarianPadding padding) {
  check_finite(cost);
  Assignment out;
  const std::size_t m = cost.rows();
  const std::size_t n = cost.cols();
  if (m == 0 || n == 0) return out;

  if (padding == HungarianPadding::kSquare) {
    const std::size_t s = std::max(m, n);
    Matrix square(s, s, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) square(i, j) = cost(i, j);
    const auto row_to_col = solve_rows_le_cols(square);
    for (std::size_t i = 0; i < m; ++i) {
      if (row_to_col[i] < n) out.pairs.emplace_back(i, row_to_col[i]);
    }
  } else if (m <= n) {
    const auto row_to_col = solve_rows_le_cols(cost);
    for (std::size_t i = 0; i < m; ++i) out.pairs.emplace_back(i, row_to_col[i]);
  } else {
    const auto col_to_row = solve_rows_le_cols(transpose(cost));
    for (std::size_t j = 0; j < n; ++j) out.pairs.emplace_back(col_to_row[j], j);
    std::sort(out.pairs.begin(), out.pairs.end());
  }
  out.total_cost = assignment_cost(cost, out.pairs);
  return out;
}

namespace {

struct BruteForce {
  const Matrix& c;
  bool transposed;
  std::size_t rows;
  std::size_t cols;
  std::vector<std::size_t> current;
  std::vector<std::size_t> best;
  std::vector<char> used;
  double best_cost = std::numeric_limits<double>::infinity();

  double at(std::size_t r, std::size_t k) const { return transposed ? c(k, r) : c(r, k); }

  void search(std::size_t r, double partial) {
    if (r == rows) {
      if (partial < best_cost) {
        best_cost = partial;
        best = current;
      }
      return;
    }
    for (std::size_t k = 0; k < cols; ++k) {
      if (used[k]) continue;
      used[k] = 1;
      current[r] = k;
      search(r + 1, partial + at(r, k));
      used[k] = 0;
    }
  }
};

}  // namespace

Assignment brute_force_match(const Matrix& cost) {
  check_finite(cost);
  const std::size_t m = cost.rows();
  const std::size_t n = cost.cols();
  if (std::min(m, n) > kBruteForceMaxSide) {
    throw ValidationError("brute_force_match: min(M, N) = " + std::to_string(std::min(m, n)) +
                          " exceeds " + std::to_string(kBruteForceMaxSide));
  }
  Assignment out;
  if (m == 0 || n == 0) return out;

  const bool transposed = m > n;
  BruteForce bf{cost, transposed, std::min(m, n), std::max(m, n), {}, {}, {}};
  bf.current.resize(bf.rows);
  bf.used.assign(bf.cols, 0);
  bf.search(0, 0.0);

  for (std::size_t r = 0; r < bf.rows; ++r) {
    if (transposed) {
      out.pairs.emplace_back(bf.best[r], r);
    } else {
      out.pairs.emplace_back(r, bf.best[r]);
    }
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  out.total_cost = assignment_cost(cost, out.pairs);
  return out;
}

}  // namespace matchfree
