#include "matchfree/pipeline_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace matchfree {

GradCheckReport PipelineCheckResult::overall() const {
  GradCheckReport r = probe;
  r.merge(preds);
  return r;
}

namespace {

// Normalizes `a` over a fixed support mask, mirroring normalize() without
// re-deriving the mask from the perturbed values.
Matrix masked_normalize(const Matrix& a, const std::vector<std::uint8_t>& mask, const ScgConfig& cfg) {
  Matrix out(a.rows(), a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double denom = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) {
      if (!mask[i * a.cols() + j]) continue;
      const double v = a(i, j);
      if (cfg.norm == NormMode::kSum1) {
        denom += v;
      } else if (cfg.norm == NormMode::kMax) {
        denom = std::max(denom, v);
      }
    }
    const double scale = cfg.norm == NormMode::kNone ? 1.0 : 1.0 / (denom + cfg.eps);
    for (std::size_t j = 0; j < a.cols(); ++j) {
      if (mask[i * a.cols() + j]) out(i, j) = a(i, j) * scale;
    }
  }
  return out;
}

double hadamard(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a.values()[k] * b.values()[k];
  return s;
}

}  // namespace

PipelineCheckResult pipeline_gradcheck(const GroundTruthSet& gts, const PredictionSet& preds,
                                       const GtProbeParams& probe, const GtProbeConfig& probe_cfg,
                                       const LossConfig& cfg, const PipelineCheckOptions& opts) {
  GtProbeParams theta = probe;
  PredictionSet p = preds;
  Gradients grads = Gradients::zeros_like(theta, p);
  const LossOutput base = total_loss_forward_backward(gts, p, theta, probe_cfg, cfg, &grads);

  const PredictionSet p0 = preds;
  const Matrix c0 = base.cost.values;
  const Matrix a_hat0 = base.scg.normalized.values;
  const std::vector<std::uint8_t> mask0 = base.scg.normalized.mask;
  const double scale = cfg.per_gt_mean ? 1.0 / static_cast<double>(std::max<std::size_t>(gts.size(), 1)) : 1.0;

  auto objective = [&]() -> double {
    if (gts.size() == 0) return 0.0;
    const Matrix c = broadcast_cost(gts, p, cfg.cost, cfg.cls_mode).values;
    const Matrix a = correspondence(gts, cfg.detach_pred_in_probe ? p0 : p, theta, probe_cfg).values;
    const Matrix a_hat = cfg.detach_corr_in_lq ? a_hat0 : masked_normalize(a, mask0, cfg.scg);
    const double lw = hadamard(a, cfg.detach_cost_in_lw ? c0 : c);
    const double lq = hadamard(a_hat, c);
    return scale * (cfg.alpha * lw + cfg.beta * lq);
  };

  std::vector<double*> probe_ptrs;
  std::vector<double> probe_grad;
  {
    auto dst = theta.tensors();
    auto src = grads.probe.tensors();
    for (std::size_t t = 0; t < dst.size(); ++t) {
      for (std::size_t k = 0; k < dst[t].data.size(); ++k) {
        probe_ptrs.push_back(&dst[t].data[k]);
        probe_grad.push_back(src[t].data[k]);
      }
    }
  }
  std::vector<double*> pred_ptrs;
  std::vector<double> pred_grad;
  for (std::size_t k = 0; k < p.logits.size(); ++k) {
    pred_ptrs.push_back(&p.logits.values()[k]);
    pred_grad.push_back(grads.preds.logits.values()[k]);
  }
  for (std::size_t j = 0; j < p.boxes.size(); ++j) {
    Box& b = p.boxes[j];
    double* fields[4] = {&b.cx, &b.cy, &b.w, &b.h};
    for (int f = 0; f < 4; ++f) {
      pred_ptrs.push_back(fields[f]);
      pred_grad.push_back(grads.preds.boxes(j, static_cast<std::size_t>(f)));
    }
  }

  if (opts.corrupt_index) {
    std::size_t k = *opts.corrupt_index;
    auto& target = k < probe_grad.size() ? probe_grad[k] : pred_grad.at(k - probe_grad.size());
    target += 1.0 + std::abs(target);
  }

  PipelineCheckResult r;
  r.loss = base.report.l_total;
  r.probe = gradcheck(objective, probe_ptrs, probe_grad, opts.fd);
  r.preds = gradcheck(objective, pred_ptrs, pred_grad, opts.fd);
  return r;
}

}  // namespace matchfree
