#include "matchfree/gt_probe.hpp"

#include <cmath>
#include <string>

#include "matchfree/errors.hpp"

namespace matchfree {

void GtProbeConfig::validate() const {
  if (hidden_dim == 0) throw ValidationError("probe hidden_dim must be positive");
  if (mlp_layers == 0) throw ValidationError("probe mlp_layers must be positive");
  if (num_heads == 0 || hidden_dim % num_heads != 0) {
    throw ValidationError("probe num_heads must divide hidden_dim");
  }
  if (!(box_input_scale > 0.0) || !std::isfinite(box_input_scale)) {
    throw ValidationError("probe box_input_scale must be positive and finite");
  }
}

namespace {

Matrix uniform_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = dist(rng);
  return m;
}

// Columns [h * width, (h + 1) * width) of m.
Matrix column_block(const Matrix& m, std::size_t h, std::size_t width) {
  Matrix out(m.rows(), width);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t c = 0; c < width; ++c) out(i, c) = m(i, h * width + c);
  return out;
}

void add_column_block(Matrix& m, const Matrix& block, std::size_t h) {
  const std::size_t width = block.cols();
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t c = 0; c < width; ++c) m(i, h * width + c) += block(i, c);
}

}  // namespace

GtProbeParams GtProbeParams::init(std::size_t num_classes, const GtProbeConfig& cfg,
                                  std::mt19937_64& rng) {
  cfg.validate();
  if (num_classes == 0) throw ValidationError("probe needs at least one class");
  std::vector<std::size_t> dims{num_classes + 4};
  for (std::size_t l = 0; l < cfg.mlp_layers; ++l) dims.push_back(cfg.hidden_dim);

  GtProbeParams p;
  p.mlp_gt = MlpParams::init(dims, rng);
  p.mlp_q = MlpParams::init(dims, rng);
  p.w_q = uniform_matrix(cfg.hidden_dim, cfg.hidden_dim, rng);
  p.w_k = uniform_matrix(cfg.hidden_dim, cfg.hidden_dim, rng);
  p.w_v = uniform_matrix(cfg.hidden_dim, cfg.hidden_dim, rng);
  p.num_heads = cfg.num_heads;
  p.box_scale = cfg.box_input_scale;
  return p;
}

GtProbeParams GtProbeParams::zeros_like() const {
  GtProbeParams g;
  g.mlp_gt = mlp_gt.zeros_like();
  g.mlp_q = mlp_q.zeros_like();
  g.w_q = Matrix(w_q.rows(), w_q.cols());
  g.w_k = Matrix(w_k.rows(), w_k.cols());
  g.w_v = Matrix(w_v.rows(), w_v.cols());
  g.num_heads = num_heads;
  g.box_scale = box_scale;
  return g;
}

std::size_t GtProbeParams::num_classes() const {
  const std::size_t in = mlp_gt.in_dim();
  return in >= 4 ? in - 4 : 0;
}

void GtProbeParams::validate() const {
  mlp_gt.validate();
  mlp_q.validate();
  const std::size_t d = hidden_dim();
  if (mlp_gt.out_dim() != d || mlp_q.out_dim() != d) {
    throw ShapeError("probe encoders must both output the hidden dimension " + std::to_string(d));
  }
  if (mlp_gt.in_dim() != mlp_q.in_dim() || mlp_gt.in_dim() < 5) {
    throw ShapeError("probe encoders must share an input width of K + 4");
  }
  for (const Matrix* w : {&w_q, &w_k, &w_v}) {
    if (w->rows() != d || w->cols() != d) throw ShapeError("probe projections must be DxD");
  }
  if (num_heads == 0 || d % num_heads != 0) throw ShapeError("num_heads must divide D");
}

void GtProbeParams::fill(double v) {
  mlp_gt.fill(v);
  mlp_q.fill(v);
  w_q.fill(v);
  w_k.fill(v);
  w_v.fill(v);
}

std::vector<TensorRef> GtProbeParams::tensors() {
  std::vector<TensorRef> out;
  mlp_gt.append_tensors("mlp_gt", out);
  mlp_q.append_tensors("mlp_q", out);
  out.push_back({"W_Q", w_q.values(), w_q.rows(), w_q.cols()});
  out.push_back({"W_K", w_k.values(), w_k.rows(), w_k.cols()});
  out.push_back({"W_V", w_v.values(), w_v.rows(), w_v.cols()});
  return out;
}

Matrix encode_gt_input(const GroundTruthSet& gts, std::size_t num_classes) {
  gts.validate(num_classes);
  Matrix x(gts.size(), num_classes + 4);
  for (std::size_t i = 0; i < gts.size(); ++i) {
    x(i, static_cast<std::size_t>(gts.labels[i])) = 1.0;
    const auto b = gts.boxes[i].as_array();
    for (std::size_t c = 0; c < 4; ++c) x(i, num_classes + c) = b[c];
  }
  return x;
}

Matrix encode_pred_input(const PredictionSet& preds, PredInput mode) {
  preds.validate();
  const std::size_t k = preds.num_classes();
  Matrix x(preds.size(), k + 4);
  const Matrix probs = mode == PredInput::kProbabilities ? softmax_rows(preds.logits) : Matrix();
  const Matrix& src = mode == PredInput::kProbabilities ? probs : preds.logits;
  for (std::size_t j = 0; j < preds.size(); ++j) {
    for (std::size_t c = 0; c < k; ++c) x(j, c) = src(j, c);
    const auto b = preds.boxes[j].as_array();
    for (std::size_t c = 0; c < 4; ++c) x(j, k + c) = b[c];
  }
  return x;
}

void scale_box_columns(Matrix& x, double scale) {
  if (x.cols() < 4) throw ShapeError("scale_box_columns: fewer than four columns");
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t c = x.cols() - 4; c < x.cols(); ++c) x(i, c) = (x(i, c) - 0.5) * scale;
}

Embeddings encode(const GroundTruthSet& gts, const PredictionSet& preds, const GtProbeParams& p,
                  PredInput mode, ProbeCache* cache) {
  p.validate();
  const std::size_t k = p.num_classes();
  if (preds.num_classes() != k) {
    throw ValidationError("probe expects " + std::to_string(k) + " classes, predictions carry " +
                          std::to_string(preds.num_classes()));
  }
  Matrix gt_in = encode_gt_input(gts, k);
  Matrix pred_in = encode_pred_input(preds, mode);
  scale_box_columns(gt_in, p.box_scale);
  scale_box_columns(pred_in, p.box_scale);
  Embeddings e;
  e.e_gt = mlp_forward(p.mlp_gt, gt_in, cache ? &cache->gt_mlp : nullptr);
  e.e_q = mlp_forward(p.mlp_q, pred_in, cache ? &cache->q_mlp : nullptr);
  if (cache) {
    cache->gt_input = std::move(gt_in);
    cache->pred_input = std::move(pred_in);
    cache->e_gt = e.e_gt;
    cache->e_q = e.e_q;
  }
  return e;
}

CorrMatrix probe_forward(const Matrix& e_gt, const Matrix& e_q, const GtProbeParams& p,
                         ProbeCache* cache, bool compute_values) {
  const std::size_t d = p.hidden_dim();
  if (e_gt.cols() != d || e_q.cols() != d) {
    throw ShapeError("probe_forward: embeddings " + e_gt.shape_str() + " / " + e_q.shape_str() +
                     " do not share D = " + std::to_string(d));
  }
  if (e_q.rows() == 0) throw ValidationError("probe_forward: no predictions to attend over");

  Matrix q = matmul(e_gt, p.w_q);
  Matrix k = matmul(e_q, p.w_k);
  const std::size_t heads = p.num_heads;
  const std::size_t width = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(width));

  Matrix attn(e_gt.rows(), e_q.rows());
  std::vector<Matrix> head_attn;
  for (std::size_t h = 0; h < heads; ++h) {
    Matrix logits = heads == 1 ? matmul_bt(q, k) : matmul_bt(column_block(q, h, width), column_block(k, h, width));
    scale_inplace(logits, scale);
    Matrix a = softmax_rows(logits);
    if (heads == 1) {
      attn = a;
    } else {
      Matrix contrib = a;
      scale_inplace(contrib, 1.0 / static_cast<double>(heads));
      add_inplace(attn, contrib);
    }
    head_attn.push_back(std::move(a));
  }

  if (cache) {
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->head_attn = std::move(head_attn);
    cache->attn = attn;
    cache->e_gt = e_gt;
    cache->e_q = e_q;
    if (compute_values) {
      cache->values = matmul(e_q, p.w_v);
      cache->attended = matmul(attn, cache->values);
    }
  }
  return {std::move(attn)};
}

CorrMatrix correspondence(const GroundTruthSet& gts, const PredictionSet& preds,
                          const GtProbeParams& p, const GtProbeConfig& cfg, ProbeCache* cache) {
  const Embeddings e = encode(gts, preds, p, cfg.pred_input, cache);
  return probe_forward(e.e_gt, e.e_q, p, cache, cfg.compute_values);
}

void probe_backward(const Matrix& d_attn, const ProbeCache& cache, const GtProbeParams& p,
                    GtProbeParams& tape, Matrix* d_pred_input) {
  if (!d_attn.same_shape(cache.attn)) {
    throw ShapeError("probe_backward: dA is " + d_attn.shape_str() + ", A is " +
                     cache.attn.shape_str());
  }
  const std::size_t d = p.hidden_dim();
  if (tape.hidden_dim() != d || tape.mlp_gt.layers.size() != p.mlp_gt.layers.size() ||
      tape.mlp_q.layers.size() != p.mlp_q.layers.size()) {
    throw ShapeError("probe_backward: tape does not mirror parameters");
  }
  const std::size_t heads = p.num_heads;
  const std::size_t width = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(width));

  Matrix d_q(cache.q.rows(), d);
  Matrix d_k(cache.k.rows(), d);
  for (std::size_t h = 0; h < heads; ++h) {
    Matrix d_head = d_attn;
    if (heads > 1) scale_inplace(d_head, 1.0 / static_cast<double>(heads));
    Matrix d_logits = softmax_rows_backward(cache.head_attn[h], d_head);
    scale_inplace(d_logits, scale);
    if (heads == 1) {
      d_q = matmul(d_logits, cache.k);
      d_k = matmul_at(d_logits, cache.q);
    } else {
      add_column_block(d_q, matmul(d_logits, column_block(cache.k, h, width)), h);
      add_column_block(d_k, matmul_at(d_logits, column_block(cache.q, h, width)), h);
    }
  }

  add_inplace(tape.w_q, matmul_at(cache.e_gt, d_q));
  add_inplace(tape.w_k, matmul_at(cache.e_q, d_k));
  const Matrix d_egt = matmul_bt(d_q, p.w_q);
  const Matrix d_eq = matmul_bt(d_k, p.w_k);

  if (cache.e_gt.rows() > 0) mlp_backward(p.mlp_gt, cache.gt_mlp, d_egt, tape.mlp_gt);
  Matrix d_in = mlp_backward(p.mlp_q, cache.q_mlp, d_eq, tape.mlp_q);
  if (d_pred_input) {
    for (std::size_t j = 0; j < d_in.rows(); ++j)
      for (std::size_t c = d_in.cols() - 4; c < d_in.cols(); ++c) d_in(j, c) *= p.box_scale;
    *d_pred_input = std::move(d_in);
  }
}

void pred_input_backward(const Matrix& d_pred_input, const PredictionSet& preds, PredInput mode,
                         PredictionGrad& grad) {
  const std::size_t k = preds.num_classes();
  if (d_pred_input.rows() != preds.size() || d_pred_input.cols() != k + 4) {
    throw ShapeError("pred_input_backward: gradient is " + d_pred_input.shape_str());
  }
  Matrix d_cls(preds.size(), k);
  for (std::size_t j = 0; j < preds.size(); ++j)
    for (std::size_t c = 0; c < k; ++c) d_cls(j, c) = d_pred_input(j, c);
  if (mode == PredInput::kProbabilities) {
    d_cls = softmax_rows_backward(softmax_rows(preds.logits), d_cls);
  }
  add_inplace(grad.logits, d_cls);
  for (std::size_t j = 0; j < preds.size(); ++j)
    for (std::size_t c = 0; c < 4; ++c) grad.boxes(j, c) += d_pred_input(j, k + c);
}

}  // namespace matchfree
