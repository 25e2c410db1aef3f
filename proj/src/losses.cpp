#include "matchfree/losses.hpp"

#include <algorithm>

#include "matchfree/errors.hpp"

namespace matchfree {

void LossConfig::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ValidationError("loss alpha/beta must be >= 0");
  cost.validate();
  scg.validate();
}

namespace {

double hadamard_sum(const Matrix& w, const Matrix& c, const char* what) {
  if (!w.same_shape(c)) {
    throw ShapeError(std::string(what) + ": weights " + w.shape_str() + " vs cost " + c.shape_str());
  }
  double total = 0.0;
  auto wv = w.values();
  auto cv = c.values();
  for (std::size_t i = 0; i < wv.size(); ++i) total += wv[i] * cv[i];
  return total;
}

std::vector<double> row_hadamard(const Matrix& w, const Matrix& c) {
  std::vector<double> out(w.rows(), 0.0);
  for (std::size_t i = 0; i < w.rows(); ++i) {
    auto wr = w.row(i);
    auto cr = c.row(i);
    for (std::size_t j = 0; j < wr.size(); ++j) out[i] += wr[j] * cr[j];
  }
  return out;
}

}  // namespace

double loss_w(const CorrMatrix& a, const CostMatrix& c) { return hadamard_sum(a.values, c.values, "loss_w"); }

double loss_q(const SparseCorr& a_hat, const CostMatrix& c) {
  return hadamard_sum(a_hat.values, c.values, "loss_q");
}

Gradients Gradients::zeros_like(const GtProbeParams& p, const PredictionSet& preds) {
  return {p.zeros_like(), PredictionGrad::zeros_like(preds)};
}

LossOutput total_loss_forward_backward(const GroundTruthSet& gts, const PredictionSet& preds,
                                       const GtProbeParams& probe, const GtProbeConfig& probe_cfg,
                                       const LossConfig& cfg, Gradients* grads) {
  cfg.validate();
  CostMatrix cost = broadcast_cost(gts, preds, cfg.cost, cfg.cls_mode);
  return loss_forward_backward_with_cost(gts, preds, cost, probe, probe_cfg, cfg, grads);
}

LossOutput loss_forward_backward_with_cost(const GroundTruthSet& gts, const PredictionSet& preds,
                                           const CostMatrix& cost, const GtProbeParams& probe,
                                           const GtProbeConfig& probe_cfg, const LossConfig& cfg,
                                           Gradients* grads) {
  cfg.validate();
  if (cost.num_gts() != gts.size() || cost.num_queries() != preds.size()) {
    throw ShapeError("cost matrix " + cost.values.shape_str() + " does not match the inputs");
  }
  LossOutput out;
  out.cost = cost;

  ProbeCache cache;
  out.dense = correspondence(gts, preds, probe, probe_cfg, grads ? &cache : nullptr);
  out.scg = sparse_correspondence(out.dense.values, cfg.scg);

  const double scale = cfg.per_gt_mean ? 1.0 / static_cast<double>(std::max<std::size_t>(gts.size(), 1)) : 1.0;
  auto& r = out.report;
  r.per_gt_w = row_hadamard(out.dense.values, cost.values);
  r.per_gt_q = row_hadamard(out.scg.normalized.values, cost.values);
  r.l_w = scale * loss_w(out.dense, cost);
  r.l_q = scale * loss_q(out.scg.normalized, cost);
  r.l_total = cfg.alpha * r.l_w + cfg.beta * r.l_q;
  r.surviving.resize(gts.size());
  for (std::size_t i = 0; i < gts.size(); ++i) r.surviving[i] = out.scg.normalized.row_support(i);

  if (!grads) return out;

  const std::size_t m = gts.size();
  const std::size_t n = preds.size();
  const double aw = cfg.alpha * scale;
  const double bq = cfg.beta * scale;

  // dL/dA: the L_w path, plus the L_q path through A-hat when coupled.
  Matrix d_attn = cost.values;
  scale_inplace(d_attn, aw);
  if (!cfg.detach_corr_in_lq && bq != 0.0) {
    Matrix d_hat = cost.values;
    scale_inplace(d_hat, bq);
    add_inplace(d_attn, sparse_correspondence_backward(out.scg, cfg.scg, d_hat));
  }

  // dL/dC: the L_q path, plus the L_w path when coupled.
  Matrix d_cost = out.scg.normalized.values;
  scale_inplace(d_cost, bq);
  if (!cfg.detach_cost_in_lw && aw != 0.0) {
    Matrix extra = out.dense.values;
    scale_inplace(extra, aw);
    add_inplace(d_cost, extra);
  }

  Matrix d_pred_input;
  probe_backward(d_attn, cache, probe, grads->probe,
                 cfg.detach_pred_in_probe ? nullptr : &d_pred_input);
  if (!cfg.detach_pred_in_probe) {
    pred_input_backward(d_pred_input, preds, probe_cfg.pred_input, grads->preds);
  }
  if (m > 0 && n > 0) {
    broadcast_cost_backward(gts, preds, cfg.cost, cfg.cls_mode, d_cost, grads->preds);
  }
  return out;
}

}  // namespace matchfree
