#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "matchfree/matrix.hpp"

namespace matchfree {

struct Assignment {
  // (gt_index, query_index), sorted by gt_index.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  double total_cost = 0.0;
};

enum class HungarianPadding {
  // Pad to a max(M, N) square with zero-cost dummies: the classical O(N^3)
  // formulation used as the latency baseline.
  kSquare,
  // Run the augmenting-path solver on the rectangular matrix directly,
  // O(min^2 * max).
  kRectangular,
};

// Minimum-cost one-to-one assignment of min(M, N) rows/columns.
// Throws ValidationError on non-finite entries.
Assignment hungarian_match(const Matrix& cost, HungarianPadding padding = HungarianPadding::kSquare);

inline constexpr std::size_t kBruteForceMaxSide = 9;

// Exhaustive minimum over all injections of the smaller side into the larger.
// Throws ValidationError when min(M, N) > kBruteForceMaxSide.
Assignment brute_force_match(const Matrix& cost);

// Sum of cost over pairs, accumulated in gt order.
double assignment_cost(const Matrix& cost, const std::vector<std::pair<std::size_t, std::size_t>>& pairs);

}  // namespace matchfree
