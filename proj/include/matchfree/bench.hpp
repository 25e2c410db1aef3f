#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "matchfree/gt_probe.hpp"
#include "matchfree/losses.hpp"

namespace matchfree {

enum class BenchMethod { kHungarian, kMatchFreeForward, kMatchFreeForwardBackward };

const char* bench_method_name(BenchMethod m);
BenchMethod parse_bench_method(const std::string& s);

struct BenchSpec {
  std::vector<std::pair<std::size_t, std::size_t>> grid{{20, 100}, {20, 300}, {20, 900}};  // (M, N)
  std::size_t repetitions = 9;
  std::size_t warmup = 2;
  std::vector<BenchMethod> methods{BenchMethod::kHungarian, BenchMethod::kMatchFreeForward,
                                   BenchMethod::kMatchFreeForwardBackward};
  std::size_t num_classes = 4;
  std::uint64_t seed = 1;
  // Timed samples shorter than this are repeated in an inner loop.
  double min_sample_ms = 1.0;

  void validate() const;
  friend bool operator==(const BenchSpec&, const BenchSpec&) = default;
};

struct BenchCell {
  BenchMethod method = BenchMethod::kHungarian;
  std::size_t m = 0;
  std::size_t n = 0;
  double median_ms = 0.0;
  double iqr_ms = 0.0;
  std::size_t reps = 0;
  std::size_t inner_loops = 1;
};

struct BenchResult {
  std::vector<BenchCell> cells;
  unsigned cores = 0;
  std::string timestamp;

  const BenchCell* find(BenchMethod method, std::size_t m, std::size_t n) const;
};

// Times every requested method on every (M, N) cell. All methods of a cell
// share one seeded input set and one precomputed cost matrix. Hungarian cells
// with M = 0 are skipped.
BenchResult run_bench(const BenchSpec& spec, const GtProbeConfig& probe_cfg, const LossConfig& loss_cfg);

// CSV "method,M,N,median_ms,iqr_ms,reps" followed by '#'-prefixed summary lines.
void emit_report(const BenchResult& r, const std::filesystem::path& path);
std::string bench_summary(const BenchResult& r);
BenchResult parse_report(const std::filesystem::path& path);

struct ShapeCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Scaling-shape assertions over consecutive N at each fixed M > 0:
//  - Hungarian median non-decreasing in N (10% noise allowance)
//  - Hungarian growth ratio exceeds the match-free fwd+bwd growth ratio
//  - match-free fwd+bwd growth at most 1.5x the growth in N
//  - at the largest N, match-free fwd+bwd is faster than Hungarian
std::vector<ShapeCheck> check_scaling(const BenchResult& r);

}  // namespace matchfree
