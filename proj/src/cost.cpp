#include "matchfree/cost.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "matchfree/errors.hpp"

namespace matchfree {

void GroundTruthSet::validate(std::size_t num_classes) const {
  if (labels.size() != boxes.size()) {
    throw ValidationError("ground truth: " + std::to_string(labels.size()) + " labels but " +
                          std::to_string(boxes.size()) + " boxes");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw ValidationError("ground truth " + std::to_string(i) + ": label " +
                            std::to_string(labels[i]) + " outside [0, " +
                            std::to_string(num_classes) + ")");
    }
    boxes[i].validate();
  }
}

void PredictionSet::validate() const {
  if (logits.rows() != boxes.size()) {
    throw ValidationError("predictions: " + std::to_string(logits.rows()) + " logit rows but " +
                          std::to_string(boxes.size()) + " boxes");
  }
  if (logits.cols() == 0) throw ValidationError("predictions: need at least one class");
  if (!logits.all_finite()) throw ValidationError("predictions: non-finite logits");
  for (const auto& b : boxes) b.validate();
}

PredictionGrad PredictionGrad::zeros_like(const PredictionSet& p) {
  return {Matrix(p.size(), p.num_classes()), Matrix(p.size(), 4)};
}

void CostWeights::validate() const {
  if (!(cls >= 0.0) || !(l1 >= 0.0) || !(giou >= 0.0)) {
    throw ValidationError("cost weights must be non-negative");
  }
}

namespace {

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }
bool is_clamped(double p) { return p < kProbClamp || p > 1.0 - kProbClamp; }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_class(std::span<const double> logits, int class_id) {
  if (class_id < 0 || static_cast<std::size_t>(class_id) >= logits.size()) {
    throw ValidationError("class id " + std::to_string(class_id) + " outside [0, " +
                          std::to_string(logits.size()) + ")");
  }
}

// Softmax probability of one class, stabilized by max subtraction.
std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p[k] = std::exp(logits[k] - mx);
    sum += p[k];
  }
  for (double& v : p) v /= sum;
  return p;
}

double focal_cost(double p) {
  p = clamp_prob(p);
  const double pos = kFocalAlpha * std::pow(1.0 - p, kFocalGamma) * -std::log(p);
  const double neg = (1.0 - kFocalAlpha) * std::pow(p, kFocalGamma) * -std::log(1.0 - p);
  return pos - neg;
}

double focal_cost_dp(double p) {
  const double g = kFocalGamma;
  const double dpos =
      kFocalAlpha * (-g * std::pow(1.0 - p, g - 1.0) * -std::log(p) - std::pow(1.0 - p, g) / p);
  const double dneg = (1.0 - kFocalAlpha) *
                      (g * std::pow(p, g - 1.0) * -std::log(1.0 - p) + std::pow(p, g) / (1.0 - p));
  return dpos - dneg;
}

}  // namespace

double classification_cost(std::span<const double> logits, int class_id, ClassCostMode mode) {
  check_class(logits, class_id);
  if (mode == ClassCostMode::kNll) {
    return -std::log(clamp_prob(softmax(logits)[class_id]));
  }
  return focal_cost(sigmoid(logits[class_id]));
}

std::vector<double> classification_cost_grad(std::span<const double> logits, int class_id,
                                             ClassCostMode mode) {
  check_class(logits, class_id);
  std::vector<double> grad(logits.size(), 0.0);
  if (mode == ClassCostMode::kNll) {
    const auto p = softmax(logits);
    if (is_clamped(p[class_id])) return grad;
    for (std::size_t k = 0; k < p.size(); ++k) grad[k] = p[k];
    grad[class_id] -= 1.0;
    return grad;
  }
  const double p = sigmoid(logits[class_id]);
  if (is_clamped(p)) return grad;
  grad[class_id] = focal_cost_dp(p) * p * (1.0 - p);
  return grad;
}

CostMatrix broadcast_cost(const GroundTruthSet& gts, const PredictionSet& preds,
                          const CostWeights& w, ClassCostMode mode, bool keep_components) {
  preds.validate();
  gts.validate(preds.num_classes());
  w.validate();
  if (preds.size() == 0) throw ValidationError("broadcast_cost: need at least one prediction");

  const std::size_t m = gts.size();
  const std::size_t n = preds.size();
  CostMatrix out{Matrix(m, n), std::nullopt};
  if (keep_components) out.components = CostComponents{Matrix(m, n), Matrix(m, n), Matrix(m, n)};

  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double cls = classification_cost(preds.logits.row(j), gts.labels[i], mode);
      const double l1 = l1_cost(preds.boxes[j], gts.boxes[i]);
      const double gl = giou_loss(preds.boxes[j], gts.boxes[i]);
      out.values(i, j) = w.cls * cls + w.l1 * l1 + w.giou * gl;
      if (out.components) {
        out.components->cls(i, j) = cls;
        out.components->l1(i, j) = l1;
        out.components->giou(i, j) = gl;
      }
    }
  }
  return out;
}

void broadcast_cost_backward(const GroundTruthSet& gts, const PredictionSet& preds,
                             const CostWeights& w, ClassCostMode mode, const Matrix& d_cost,
                             PredictionGrad& grad) {
  if (d_cost.rows() != gts.size() || d_cost.cols() != preds.size()) {
    throw ShapeError("broadcast_cost_backward: dC is " + d_cost.shape_str() + ", expected " +
                     std::to_string(gts.size()) + "x" + std::to_string(preds.size()));
  }
  if (grad.logits.rows() != preds.size() || grad.logits.cols() != preds.num_classes() ||
      grad.boxes.rows() != preds.size() || grad.boxes.cols() != 4) {
    throw ShapeError("broadcast_cost_backward: gradient buffers do not match predictions");
  }
  for (std::size_t i = 0; i < gts.size(); ++i) {
    for (std::size_t j = 0; j < preds.size(); ++j) {
      const double up = d_cost(i, j);
      if (up == 0.0) continue;
      if (w.cls != 0.0) {
        const auto gl = classification_cost_grad(preds.logits.row(j), gts.labels[i], mode);
        auto row = grad.logits.row(j);
        for (std::size_t k = 0; k < gl.size(); ++k) row[k] += up * w.cls * gl[k];
      }
      const auto g1 = l1_cost_grad(preds.boxes[j], gts.boxes[i]);
      const auto gg = giou_loss_grad(preds.boxes[j], gts.boxes[i]);
      auto brow = grad.boxes.row(j);
      for (int k = 0; k < 4; ++k) brow[k] += up * (w.l1 * g1[k] + w.giou * gg[k]);
    }
  }
}

}  // namespace matchfree
