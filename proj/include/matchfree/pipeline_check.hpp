#pragma once

#include <cstddef>
#include <optional>

#include "matchfree/gradcheck.hpp"
#include "matchfree/losses.hpp"

namespace matchfree {

struct PipelineCheckOptions {
  GradCheckOptions fd;
  // Test hook: perturbs this entry of the flattened analytic gradient
  // (probe tensors first, then logits, then boxes) before comparison.
  std::optional<std::size_t> corrupt_index;
};

struct PipelineCheckResult {
  double loss = 0.0;
  GradCheckReport probe;
  GradCheckReport preds;

  GradCheckReport overall() const;
  bool passed(double tol) const { return overall().passed(tol); }
};

// Checks the gradients produced by total_loss_forward_backward against
// central differences of the objective they descend: every detached quantity
// is frozen at its value for the unperturbed inputs, and the SCG mask is kept
// fixed as in the backward pass.
PipelineCheckResult pipeline_gradcheck(const GroundTruthSet& gts, const PredictionSet& preds,
                                       const GtProbeParams& probe, const GtProbeConfig& probe_cfg,
                                       const LossConfig& loss_cfg, const PipelineCheckOptions& opts = {});

}  // namespace matchfree
