#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "matchfree/cost.hpp"
#include "matchfree/gt_probe.hpp"
#include "matchfree/losses.hpp"
#include "matchfree/mlp.hpp"
#include "matchfree/optim.hpp"

namespace matchfree {

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss; what() carries the diagnostic.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& msg, nlohmann::json diagnostic)
      : std::runtime_error(msg), diagnostic_(std::move(diagnostic)) {}
  const nlohmann::json& diagnostic() const { return diagnostic_; }

 private:
  nlohmann::json diagnostic_;
};

enum class Placement {
  // Objects sit on distinct cells of a grid x grid layout, with jitter.
  kGrid,
  // Centers drawn uniformly, rejection-sampled for min_separation.
  kUniform,
};

struct SceneConfig {
  std::size_t num_classes = 4;
  std::size_t min_gts = 1;
  std::size_t max_gts = 5;
  Placement placement = Placement::kGrid;
  std::size_t grid = 4;
  double jitter = 0.015;
  double min_size = 0.14;
  double max_size = 0.2;
  double min_separation = 0.1;
  std::size_t max_retries = 1000;
  // Grid placement: each cell has a fixed class; with this probability the
  // label is redrawn uniformly instead.
  double label_noise = 0.0;
  std::uint64_t layout_seed = 7;

  void validate() const;
  friend bool operator==(const SceneConfig&, const SceneConfig&) = default;
};

struct Scene {
  GroundTruthSet gts;
  std::uint64_t seed = 0;
};

Scene generate_scene(const SceneConfig& cfg, std::uint64_t seed);
// Scene i is generated from a seed derived from (seed, i).
std::vector<Scene> generate_scenes(const SceneConfig& cfg, std::uint64_t seed, std::size_t count);

// splitmix64-based seed derivation.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

struct ToyModelConfig {
  std::size_t num_queries = 25;
  std::size_t query_dim = 32;
  std::size_t head_hidden = 64;
  std::size_t head_layers = 2;
  // Query embeddings start uniform in [-scale, scale].
  double query_init_scale = 1.0;
  // Per-query learnable reference boxes added in logit space before the
  // sigmoid; centers start on a ceil(sqrt(N)) grid, sizes at reference_size.
  bool reference_boxes = true;
  double reference_size = 0.2;
  // Zero the head's output layer so every query starts with identical class
  // scores and exactly on its reference box.
  bool zero_init_output = true;

  void validate() const;
  friend bool operator==(const ToyModelConfig&, const ToyModelConfig&) = default;
};

struct ToyHeadCache {
  MlpCache mlp;
  Matrix raw;  // N x (K + 4) head output before squashing
};

// Learnable query bank plus a shared per-query head producing K logits and a
// sigmoid-squashed box. Predictions do not depend on the scene.
struct ToyModel {
  Matrix queries;  // N x query_dim
  MlpParams head;
  Matrix refs;  // N x 4 logit-space box offsets, or empty
  std::size_t num_classes = 0;

  static ToyModel init(const ToyModelConfig& cfg, std::size_t num_classes, std::mt19937_64& rng);
  ToyModel zeros_like() const;

  PredictionSet predict(ToyHeadCache* cache = nullptr) const;
  // Accumulates into `grad` (same structure as this model).
  void backward(const ToyHeadCache& cache, const PredictionGrad& d_preds, ToyModel& grad) const;

  // Names: toy.queries, toy.head.<l>.weight|bias, toy.refs (when enabled).
  std::vector<TensorRef> tensors();
};

struct TrainConfig {
  std::size_t steps = 2000;
  std::size_t batch_size = 4;
  // Query embeddings and head. Slower than the probe so the correspondence
  // can track the predictions as they move.
  AdamConfig adam{.lr = 1e-4};
  // Optimizer for the probe parameters (a separate parameter group).
  AdamConfig probe_adam{.lr = 1e-3};
  std::uint64_t seed = 0;
  std::size_t log_every = 10;
  std::size_t eval_every = 100;
  std::size_t probe_scenes = 32;
  std::uint64_t probe_seed = 99991;
  std::size_t eval_scenes = 200;
  std::uint64_t eval_seed = 1000003;
  double iou_threshold = 0.5;
  double small_area = 0.03;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct ToyConfig {
  SceneConfig scene;
  ToyModelConfig model;
  TrainConfig train;

  friend bool operator==(const ToyConfig&, const ToyConfig&) = default;
};

enum class Objective { kMatchFree, kHungarian };

const char* objective_name(Objective o);

struct TrainState {
  ToyModel model;
  GtProbeParams probe;
  AdamState model_opt;
  AdamState probe_opt;
  std::size_t step = 0;
};

TrainState init_train_state(const ToyConfig& cfg, const GtProbeConfig& probe_cfg);

struct StepLog {
  std::size_t step = 0;
  double l_w = 0.0;
  double l_q = 0.0;
  double l_total = 0.0;
  std::optional<double> purity;  // on the held-out probe set, when evaluated

  nlohmann::json to_json() const;
};

struct EvalMetrics {
  double matched_iou = 0.0;
  double purity = 0.0;
  double class_accuracy = 0.0;
  double mean_surviving = 0.0;
  // Same as purity, but through the Hungarian-matched query.
  double hungarian_purity = 0.0;
  double purity_small = 0.0;
  double purity_large = 0.0;
  std::size_t num_gts = 0;
  std::size_t num_small = 0;
  std::size_t num_large = 0;

  nlohmann::json to_json() const;
};

struct EvalAccumulator {
  std::size_t gts = 0, small = 0, large = 0;
  std::size_t pure = 0, pure_small = 0, pure_large = 0, hungarian_pure = 0, class_correct = 0;
  double iou_sum = 0.0;
  double surviving_sum = 0.0;

  // Scores one scene given predictions and a dense correspondence for them.
  void add_scene(const GroundTruthSet& gts, const PredictionSet& preds, const Matrix& attn,
                 const LossConfig& loss_cfg, double iou_threshold, double small_area);
  EvalMetrics finish() const;
};

EvalMetrics evaluate(const ToyModel& model, const GtProbeParams& probe, const std::vector<Scene>& scenes,
                     const GtProbeConfig& probe_cfg, const LossConfig& loss_cfg, double iou_threshold,
                     double small_area);

// Runs `steps` optimizer steps from state.step onward. The training scenes of
// step s depend only on (cfg.train.seed, s), so a resumed state continues the
// same trajectory. `on_log` sees every log_every-th step and the last one.
std::vector<StepLog> train(TrainState& state, Objective objective, std::size_t steps, const ToyConfig& cfg,
                           const GtProbeConfig& probe_cfg, const LossConfig& loss_cfg,
                           const std::function<void(const StepLog&)>& on_log = {});

nlohmann::json save_train_state(TrainState& state, Objective objective);
void load_train_state(const nlohmann::json& doc, TrainState& state);

}  // namespace matchfree
