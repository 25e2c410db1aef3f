#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "matchfree/box.hpp"
#include "matchfree/matrix.hpp"

namespace matchfree {

// Probabilities entering a log are clamped to [kProbClamp, 1 - kProbClamp].
inline constexpr double kProbClamp = 1e-8;

struct GroundTruthSet {
  std::vector<int> labels;
  std::vector<Box> boxes;

  std::size_t size() const { return boxes.size(); }
  // Labels in [0, num_classes), matching lengths, valid boxes.
  void validate(std::size_t num_classes) const;
};

struct PredictionSet {
  Matrix logits;  // N x K
  std::vector<Box> boxes;

  std::size_t size() const { return boxes.size(); }
  std::size_t num_classes() const { return logits.cols(); }
  void validate() const;
};

// Gradient buffers for a PredictionSet: logits N x K, boxes N x 4 (cx, cy, w, h).
struct PredictionGrad {
  Matrix logits;
  Matrix boxes;

  static PredictionGrad zeros_like(const PredictionSet& p);
};

struct CostWeights {
  double cls = 2.0;
  double l1 = 5.0;
  double giou = 2.0;

  void validate() const;
  friend bool operator==(const CostWeights&, const CostWeights&) = default;
};

enum class ClassCostMode {
  kNll,    // -log softmax(logits)[c]
  kFocal,  // sigmoid focal cost, alpha = 0.25, gamma = 2
};

inline constexpr double kFocalAlpha = 0.25;
inline constexpr double kFocalGamma = 2.0;

struct CostComponents {
  Matrix cls;
  Matrix l1;
  Matrix giou;  // giou loss (1 - giou)
};

struct CostMatrix {
  Matrix values;  // M x N
  std::optional<CostComponents> components;

  std::size_t num_gts() const { return values.rows(); }
  std::size_t num_queries() const { return values.cols(); }
};

double classification_cost(std::span<const double> logits, int class_id, ClassCostMode mode);
// d classification_cost / d logits. Zero where the probability is clamped.
std::vector<double> classification_cost_grad(std::span<const double> logits, int class_id,
                                             ClassCostMode mode);

CostMatrix broadcast_cost(const GroundTruthSet& gts, const PredictionSet& preds,
                          const CostWeights& w, ClassCostMode mode = ClassCostMode::kNll,
                          bool keep_components = false);

// Accumulates sum_i dC(i, j) * dC(i, j)/d pred_j into `grad`.
void broadcast_cost_backward(const GroundTruthSet& gts, const PredictionSet& preds,
                             const CostWeights& w, ClassCostMode mode, const Matrix& d_cost,
                             PredictionGrad& grad);

}  // namespace matchfree
