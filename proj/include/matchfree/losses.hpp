#pragma once

#include <cstddef>
#include <vector>

#include "matchfree/cost.hpp"
#include "matchfree/gt_probe.hpp"
#include "matchfree/scg.hpp"

namespace matchfree {

// Gradient routing between the two losses:
//  - L_w trains the probe through A; the cost it weighs is a constant unless
//    detach_cost_in_lw is cleared.
//  - L_q trains the predictions through C; the sparse weights are constants
//    unless detach_corr_in_lq is cleared.
//  - The probe's prediction-encoder input is a constant unless
//    detach_pred_in_probe is cleared.
struct LossConfig {
  double alpha = 1.0;
  double beta = 1.0;
  bool detach_cost_in_lw = true;
  bool detach_corr_in_lq = true;
  bool detach_pred_in_probe = true;
  // Divide both losses by max(M, 1).
  bool per_gt_mean = false;
  CostWeights cost;
  ClassCostMode cls_mode = ClassCostMode::kNll;
  ScgConfig scg;

  void validate() const;
  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

struct LossReport {
  double l_w = 0.0;
  double l_q = 0.0;
  double l_total = 0.0;
  std::vector<double> per_gt_w;
  std::vector<double> per_gt_q;
  std::vector<std::size_t> surviving;  // kept queries per ground truth
};

double loss_w(const CorrMatrix& a, const CostMatrix& c);
double loss_q(const SparseCorr& a_hat, const CostMatrix& c);

struct Gradients {
  GtProbeParams probe;
  PredictionGrad preds;

  static Gradients zeros_like(const GtProbeParams& p, const PredictionSet& preds);
};

struct LossOutput {
  LossReport report;
  CostMatrix cost;
  CorrMatrix dense;
  ScgTrace scg;
};

// Builds C, A and A-hat, evaluates L_total and, when `grads` is non-null,
// accumulates its gradients according to the routing flags.
LossOutput total_loss_forward_backward(const GroundTruthSet& gts, const PredictionSet& preds,
                                       const GtProbeParams& probe, const GtProbeConfig& probe_cfg,
                                       const LossConfig& cfg, Gradients* grads);

// Same, reusing an already computed cost matrix for these inputs.
LossOutput loss_forward_backward_with_cost(const GroundTruthSet& gts, const PredictionSet& preds,
                                           const CostMatrix& cost, const GtProbeParams& probe,
                                           const GtProbeConfig& probe_cfg, const LossConfig& cfg,
                                           Gradients* grads);

}  // namespace matchfree
