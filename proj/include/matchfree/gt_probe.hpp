#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "matchfree/cost.hpp"
#include "matchfree/matrix.hpp"
#include "matchfree/mlp.hpp"

namespace matchfree {

// What a prediction row feeds into the query encoder alongside its box.
enum class PredInput { kLogits, kProbabilities };

struct GtProbeConfig {
  std::size_t hidden_dim = 64;
  std::size_t mlp_layers = 2;
  std::size_t num_heads = 1;
  // Also compute V = E_q W_V and the attended output A V (not consumed by any loss).
  bool compute_values = false;
  PredInput pred_input = PredInput::kLogits;
  // Box coordinates enter both encoders as (x - 0.5) * box_input_scale. At
  // unit scale neighbouring objects differ by a few hundredths at the input and
  // the attention settles on a coarse partition before resolving them.
  double box_input_scale = 20.0;
  std::uint64_t seed = 0;  // parameter initialization

  void validate() const;
  friend bool operator==(const GtProbeConfig&, const GtProbeConfig&) = default;
};

// Cross-attention probe: ground-truth embeddings are the attention queries,
// prediction embeddings the keys (and values).
struct GtProbeParams {
  MlpParams mlp_gt;
  MlpParams mlp_q;
  Matrix w_q;  // D x D
  Matrix w_k;  // D x D
  Matrix w_v;  // D x D, only read when compute_values is set
  std::size_t num_heads = 1;
  double box_scale = 1.0;

  static GtProbeParams init(std::size_t num_classes, const GtProbeConfig& cfg, std::mt19937_64& rng);
  GtProbeParams zeros_like() const;

  std::size_t hidden_dim() const { return w_q.rows(); }
  std::size_t num_classes() const;
  void validate() const;
  void fill(double v);

  // Names: mlp_gt.<l>.weight|bias, mlp_q.<l>.weight|bias, W_Q, W_K, W_V.
  std::vector<TensorRef> tensors();
};

struct CorrMatrix {
  Matrix values;  // M x N, rows sum to 1
};

struct ProbeCache {
  Matrix gt_input;
  Matrix pred_input;
  MlpCache gt_mlp;
  MlpCache q_mlp;
  Matrix e_gt;
  Matrix e_q;
  Matrix q;
  Matrix k;
  std::vector<Matrix> head_attn;
  Matrix attn;
  Matrix values;    // filled when compute_values
  Matrix attended;  // A V, filled when compute_values
};

struct Embeddings {
  Matrix e_gt;  // M x D
  Matrix e_q;   // N x D
};

// Rows: one-hot(label, K) ++ (cx, cy, w, h).
Matrix encode_gt_input(const GroundTruthSet& gts, std::size_t num_classes);
// Rows: logits (or softmax probabilities) ++ (cx, cy, w, h).
Matrix encode_pred_input(const PredictionSet& preds, PredInput mode);

Embeddings encode(const GroundTruthSet& gts, const PredictionSet& preds, const GtProbeParams& p,
                  PredInput mode = PredInput::kLogits, ProbeCache* cache = nullptr);

CorrMatrix probe_forward(const Matrix& e_gt, const Matrix& e_q, const GtProbeParams& p,
                         ProbeCache* cache = nullptr, bool compute_values = false);

// Centres and scales the trailing four (box) columns in place.
void scale_box_columns(Matrix& x, double scale);

// encode + probe_forward.
CorrMatrix correspondence(const GroundTruthSet& gts, const PredictionSet& preds,
                          const GtProbeParams& p, const GtProbeConfig& cfg,
                          ProbeCache* cache = nullptr);

// Backpropagates dA through attention, projections and both encoders,
// accumulating into `tape`. When `d_pred_input` is non-null it receives the
// gradient with respect to the unscaled prediction encoder input (N x (K + 4)).
void probe_backward(const Matrix& d_attn, const ProbeCache& cache, const GtProbeParams& p,
                    GtProbeParams& tape, Matrix* d_pred_input = nullptr);

// Routes a gradient on the encoder input back onto the prediction set.
void pred_input_backward(const Matrix& d_pred_input, const PredictionSet& preds, PredInput mode,
                         PredictionGrad& grad);

}  // namespace matchfree
