#include "matchfree/toy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "matchfree/checkpoint.hpp"
#include "matchfree/errors.hpp"
#include "matchfree/hungarian.hpp"

namespace matchfree {

using nlohmann::json;

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void SceneConfig::validate() const {
  if (num_classes == 0) throw ValidationError("scene num_classes must be positive");
  if (min_gts < 1 || min_gts > max_gts) throw ValidationError("scene needs 1 <= min_gts <= max_gts");
  if (!(min_size > 0.0 && min_size <= max_size && max_size < 1.0)) {
    throw ValidationError("scene sizes need 0 < min_size <= max_size < 1");
  }
  if (!(jitter >= 0.0) || !(min_separation >= 0.0)) {
    throw ValidationError("scene jitter and min_separation must be >= 0");
  }
  if (!(label_noise >= 0.0 && label_noise <= 1.0)) throw ValidationError("label_noise must be in [0, 1]");
  if (placement == Placement::kGrid) {
    if (grid == 0 || max_gts > grid * grid) throw ValidationError("grid has fewer cells than max_gts");
    const double cell = 1.0 / static_cast<double>(grid);
    if (0.5 * cell - jitter < 0.5 * max_size) {
      throw ValidationError("grid cells too small for max_size and jitter");
    }
    if (cell - 2.0 * jitter < min_separation) {
      throw ValidationError("grid spacing cannot guarantee min_separation");
    }
  }
}

namespace {

std::vector<int> cell_classes(const SceneConfig& cfg) {
  std::mt19937_64 rng(cfg.layout_seed);
  std::uniform_int_distribution<int> label(0, static_cast<int>(cfg.num_classes) - 1);
  std::vector<int> out(cfg.grid * cfg.grid);
  for (int& c : out) c = label(rng);
  return out;
}

}  // namespace

Scene generate_scene(const SceneConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> count(cfg.min_gts, cfg.max_gts);
  std::uniform_real_distribution<double> size(cfg.min_size, cfg.max_size);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> label(0, static_cast<int>(cfg.num_classes) - 1);

  Scene scene;
  scene.seed = seed;
  const std::size_t m = count(rng);

  if (cfg.placement == Placement::kGrid) {
    const auto classes = cell_classes(cfg);
    std::vector<std::size_t> cells(cfg.grid * cfg.grid);
    std::iota(cells.begin(), cells.end(), 0);
    // Partial Fisher-Yates: the first m cells are a uniform sample.
    for (std::size_t i = 0; i < m; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, cells.size() - 1);
      std::swap(cells[i], cells[pick(rng)]);
    }
    std::uniform_real_distribution<double> jit(-cfg.jitter, cfg.jitter);
    const double cell = 1.0 / static_cast<double>(cfg.grid);
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t c = cells[i];
      Box b;
      b.cx = (static_cast<double>(c % cfg.grid) + 0.5) * cell + jit(rng);
      b.cy = (static_cast<double>(c / cfg.grid) + 0.5) * cell + jit(rng);
      b.w = size(rng);
      b.h = size(rng);
      int lab = classes[c];
      if (cfg.label_noise > 0.0 && unit(rng) < cfg.label_noise) lab = label(rng);
      scene.gts.boxes.push_back(b);
      scene.gts.labels.push_back(lab);
    }
    return scene;
  }

  std::size_t attempts = 0;
  while (scene.gts.size() < m) {
    if (attempts++ >= cfg.max_retries) {
      throw GenerationError("could not place " + std::to_string(m) + " boxes with separation " +
                            std::to_string(cfg.min_separation) + " after " +
                            std::to_string(cfg.max_retries) + " attempts (seed " +
                            std::to_string(seed) + ")");
    }
    Box b;
    b.w = size(rng);
    b.h = size(rng);
    b.cx = 0.5 * b.w + unit(rng) * (1.0 - b.w);
    b.cy = 0.5 * b.h + unit(rng) * (1.0 - b.h);
    const bool clear = std::all_of(scene.gts.boxes.begin(), scene.gts.boxes.end(), [&](const Box& o) {
      return std::hypot(o.cx - b.cx, o.cy - b.cy) >= cfg.min_separation;
    });
    if (!clear) continue;
    scene.gts.boxes.push_back(b);
    scene.gts.labels.push_back(label(rng));
  }
  return scene;
}

std::vector<Scene> generate_scenes(const SceneConfig& cfg, std::uint64_t seed, std::size_t count) {
  std::vector<Scene> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate_scene(cfg, derive_seed(seed, i)));
  return out;
}

void ToyModelConfig::validate() const {
  if (num_queries == 0 || query_dim == 0 || head_hidden == 0 || head_layers == 0) {
    throw ValidationError("toy model dimensions must be positive");
  }
  if (!(query_init_scale > 0.0)) throw ValidationError("query_init_scale must be positive");
  if (reference_boxes && !(reference_size > 0.0 && reference_size < 1.0)) {
    throw ValidationError("reference_size must be in (0, 1)");
  }
}

namespace {
double logit(double p) { return std::log(p / (1.0 - p)); }
}  // namespace

ToyModel ToyModel::init(const ToyModelConfig& cfg, std::size_t num_classes, std::mt19937_64& rng) {
  cfg.validate();
  ToyModel m;
  m.num_classes = num_classes;
  m.queries = Matrix(cfg.num_queries, cfg.query_dim);
  std::uniform_real_distribution<double> q(-cfg.query_init_scale, cfg.query_init_scale);
  for (double& v : m.queries.values()) v = q(rng);
  std::vector<std::size_t> dims{cfg.query_dim};
  for (std::size_t l = 1; l < cfg.head_layers; ++l) dims.push_back(cfg.head_hidden);
  dims.push_back(num_classes + 4);
  m.head = MlpParams::init(dims, rng);
  if (cfg.zero_init_output) {
    m.head.layers.back().weight.fill(0.0);
    std::fill(m.head.layers.back().bias.begin(), m.head.layers.back().bias.end(), 0.0);
  }
  if (cfg.reference_boxes) {
    const std::size_t n = cfg.num_queries;
    const auto g = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
    m.refs = Matrix(n, 4);
    for (std::size_t j = 0; j < n; ++j) {
      m.refs(j, 0) = logit((static_cast<double>(j % g) + 0.5) / static_cast<double>(g));
      m.refs(j, 1) = logit((static_cast<double>(j / g) + 0.5) / static_cast<double>(g));
      m.refs(j, 2) = logit(cfg.reference_size);
      m.refs(j, 3) = logit(cfg.reference_size);
    }
  }
  return m;
}

ToyModel ToyModel::zeros_like() const {
  return {Matrix(queries.rows(), queries.cols()), head.zeros_like(), Matrix(refs.rows(), refs.cols()), num_classes};
}

namespace {
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

PredictionSet ToyModel::predict(ToyHeadCache* cache) const {
  Matrix raw = mlp_forward(head, queries, cache ? &cache->mlp : nullptr);
  if (!refs.empty()) {
    for (std::size_t j = 0; j < raw.rows(); ++j) {
      for (std::size_t c = 0; c < 4; ++c) raw(j, num_classes + c) += refs(j, c);
    }
  }
  PredictionSet p;
  p.logits = Matrix(raw.rows(), num_classes);
  for (std::size_t j = 0; j < raw.rows(); ++j) {
    for (std::size_t c = 0; c < num_classes; ++c) p.logits(j, c) = raw(j, c);
    p.boxes.push_back({sigmoid(raw(j, num_classes)), sigmoid(raw(j, num_classes + 1)),
                       sigmoid(raw(j, num_classes + 2)), sigmoid(raw(j, num_classes + 3))});
  }
  if (cache) cache->raw = std::move(raw);
  return p;
}

void ToyModel::backward(const ToyHeadCache& cache, const PredictionGrad& d_preds, ToyModel& grad) const {
  const std::size_t n = queries.rows();
  if (d_preds.logits.rows() != n || d_preds.boxes.rows() != n) {
    throw ShapeError("toy backward: gradient rows do not match the query bank");
  }
  Matrix d_raw(n, num_classes + 4);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t c = 0; c < num_classes; ++c) d_raw(j, c) = d_preds.logits(j, c);
    for (std::size_t c = 0; c < 4; ++c) {
      const double s = sigmoid(cache.raw(j, num_classes + c));
      d_raw(j, num_classes + c) = d_preds.boxes(j, c) * s * (1.0 - s);
    }
  }
  if (!refs.empty()) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t c = 0; c < 4; ++c) grad.refs(j, c) += d_raw(j, num_classes + c);
    }
  }
  add_inplace(grad.queries, mlp_backward(head, cache.mlp, d_raw, grad.head));
}

std::vector<TensorRef> ToyModel::tensors() {
  std::vector<TensorRef> out;
  out.push_back({"toy.queries", queries.values(), queries.rows(), queries.cols()});
  head.append_tensors("toy.head", out);
  if (!refs.empty()) out.push_back({"toy.refs", refs.values(), refs.rows(), refs.cols()});
  return out;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ValidationError("train batch_size must be positive");
  if (!(adam.lr > 0.0) || !(adam.beta1 >= 0.0 && adam.beta1 < 1.0) ||
      !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) || !(adam.eps > 0.0) || !(adam.weight_decay >= 0.0)) {
    throw ValidationError("invalid Adam settings");
  }
  if (!(probe_adam.lr > 0.0) || !(probe_adam.beta1 >= 0.0 && probe_adam.beta1 < 1.0) ||
      !(probe_adam.beta2 >= 0.0 && probe_adam.beta2 < 1.0) || !(probe_adam.eps > 0.0) ||
      !(probe_adam.weight_decay >= 0.0)) {
    throw ValidationError("invalid probe Adam settings");
  }
  if (log_every == 0) throw ValidationError("train log_every must be positive");
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) throw ValidationError("iou_threshold must be in (0, 1]");
}

const char* objective_name(Objective o) { return o == Objective::kMatchFree ? "matchfree" : "hungarian"; }

TrainState init_train_state(const ToyConfig& cfg, const GtProbeConfig& probe_cfg) {
  cfg.scene.validate();
  cfg.model.validate();
  cfg.train.validate();
  std::mt19937_64 probe_rng(derive_seed(probe_cfg.seed, cfg.train.seed));
  std::mt19937_64 model_rng(derive_seed(cfg.train.seed, 0xD5));
  TrainState s;
  s.probe = GtProbeParams::init(cfg.scene.num_classes, probe_cfg, probe_rng);
  s.model = ToyModel::init(cfg.model, cfg.scene.num_classes, model_rng);
  return s;
}

json StepLog::to_json() const {
  json j{{"step", step}, {"L_w", l_w}, {"L_q", l_q}, {"L_total", l_total}};
  j["purity"] = purity ? json(*purity) : json(nullptr);
  return j;
}

json EvalMetrics::to_json() const {
  return {{"matched_iou", matched_iou},     {"purity", purity},
          {"class_accuracy", class_accuracy}, {"mean_surviving", mean_surviving},
          {"hungarian_purity", hungarian_purity}, {"purity_small", purity_small},
          {"purity_large", purity_large},     {"num_gts", num_gts},
          {"num_small", num_small},           {"num_large", num_large}};
}

void EvalAccumulator::add_scene(const GroundTruthSet& gts, const PredictionSet& preds, const Matrix& attn,
                                const LossConfig& loss_cfg, double iou_threshold, double small_area) {
  if (attn.rows() != gts.size() || attn.cols() != preds.size()) {
    throw ShapeError("evaluation: correspondence " + attn.shape_str() + " does not match the scene");
  }
  if (gts.size() == 0) return;
  const ScgTrace scg = sparse_correspondence(attn, loss_cfg.scg);
  const CostMatrix cost = broadcast_cost(gts, preds, loss_cfg.cost, loss_cfg.cls_mode);
  const Assignment matched = hungarian_match(cost.values, HungarianPadding::kRectangular);

  for (std::size_t i = 0; i < gts.size(); ++i) {
    auto row = attn.row(i);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    const double ov = iou(preds.boxes[best], gts.boxes[i]);
    const bool pure_i = ov >= iou_threshold;
    const bool is_small = gts.boxes[i].area() < small_area;

    ++this->gts;
    iou_sum += ov;
    pure += pure_i;
    auto lrow = preds.logits.row(best);
    const auto cls = std::max_element(lrow.begin(), lrow.end()) - lrow.begin();
    class_correct += cls == gts.labels[i];
    surviving_sum += static_cast<double>(scg.normalized.row_support(i));
    if (is_small) {
      ++small;
      pure_small += pure_i;
    } else {
      ++large;
      pure_large += pure_i;
    }
  }
  for (const auto& [i, j] : matched.pairs) {
    hungarian_pure += iou(preds.boxes[j], gts.boxes[i]) >= iou_threshold;
  }
}

EvalMetrics EvalAccumulator::finish() const {
  EvalMetrics m;
  m.num_gts = gts;
  m.num_small = small;
  m.num_large = large;
  if (gts == 0) return m;
  const double n = static_cast<double>(gts);
  m.matched_iou = iou_sum / n;
  m.purity = static_cast<double>(pure) / n;
  m.class_accuracy = static_cast<double>(class_correct) / n;
  m.mean_surviving = surviving_sum / n;
  m.hungarian_purity = static_cast<double>(hungarian_pure) / n;
  m.purity_small = small ? static_cast<double>(pure_small) / static_cast<double>(small) : 0.0;
  m.purity_large = large ? static_cast<double>(pure_large) / static_cast<double>(large) : 0.0;
  return m;
}

EvalMetrics evaluate(const ToyModel& model, const GtProbeParams& probe, const std::vector<Scene>& scenes,
                     const GtProbeConfig& probe_cfg, const LossConfig& loss_cfg, double iou_threshold,
                     double small_area) {
  const PredictionSet preds = model.predict();
  EvalAccumulator acc;
  for (const auto& s : scenes) {
    const CorrMatrix a = correspondence(s.gts, preds, probe, probe_cfg);
    acc.add_scene(s.gts, preds, a.values, loss_cfg, iou_threshold, small_area);
  }
  return acc.finish();
}

namespace {

void scale_tensors(const std::vector<TensorRef>& ts, double s) {
  for (const auto& t : ts)
    for (double& v : t.data) v *= s;
}

json diagnostic(const TrainState& state, std::size_t step, const Scene& scene, const LossReport& r) {
  json boxes = json::array();
  for (std::size_t i = 0; i < scene.gts.size(); ++i) {
    const auto& b = scene.gts.boxes[i];
    boxes.push_back({{"label", scene.gts.labels[i]}, {"box", {b.cx, b.cy, b.w, b.h}}});
  }
  return {{"step", step},       {"scene_seed", scene.seed}, {"gts", boxes},
          {"L_w", r.l_w},       {"L_q", r.l_q},             {"L_total", r.l_total},
          {"optimizer_steps", state.model_opt.step}};
}

}  // namespace

std::vector<StepLog> train(TrainState& state, Objective objective, std::size_t steps, const ToyConfig& cfg,
                           const GtProbeConfig& probe_cfg, const LossConfig& loss_cfg,
                           const std::function<void(const StepLog&)>& on_log) {
  cfg.scene.validate();
  cfg.train.validate();
  loss_cfg.validate();
  const auto& tc = cfg.train;
  const auto probe_set = tc.probe_scenes > 0 && tc.eval_every > 0
                             ? generate_scenes(cfg.scene, tc.probe_seed, tc.probe_scenes)
                             : std::vector<Scene>{};

  // The Hungarian control trains the probe on L_w only, with the cost
  // detached, so the probe observes but never steers the predictions.
  LossConfig probe_only = loss_cfg;
  probe_only.beta = 0.0;
  probe_only.detach_cost_in_lw = true;
  probe_only.detach_pred_in_probe = true;

  std::vector<StepLog> logs;
  const std::size_t end = state.step + steps;
  const double inv_batch = 1.0 / static_cast<double>(tc.batch_size);
  for (; state.step < end; ++state.step) {
    const std::size_t step = state.step;
    ToyHeadCache head_cache;
    const PredictionSet preds = state.model.predict(&head_cache);
    Gradients grads = Gradients::zeros_like(state.probe, preds);
    StepLog log;
    log.step = step + 1;

    for (std::size_t b = 0; b < tc.batch_size; ++b) {
      const Scene scene = generate_scene(cfg.scene, derive_seed(tc.seed, step * tc.batch_size + b));
      LossReport r;
      if (objective == Objective::kMatchFree) {
        r = total_loss_forward_backward(scene.gts, preds, state.probe, probe_cfg, loss_cfg, &grads).report;
      } else {
        const CostMatrix cost = broadcast_cost(scene.gts, preds, loss_cfg.cost, loss_cfg.cls_mode);
        r = loss_forward_backward_with_cost(scene.gts, preds, cost, state.probe, probe_cfg, probe_only, &grads)
                .report;
        const Assignment match = hungarian_match(cost.values, HungarianPadding::kRectangular);
        const double scale =
            loss_cfg.per_gt_mean ? 1.0 / static_cast<double>(std::max<std::size_t>(scene.gts.size(), 1)) : 1.0;
        Matrix d_cost(cost.num_gts(), cost.num_queries());
        for (const auto& [i, j] : match.pairs) d_cost(i, j) = loss_cfg.beta * scale;
        broadcast_cost_backward(scene.gts, preds, loss_cfg.cost, loss_cfg.cls_mode, d_cost, grads.preds);
        r.l_q = scale * match.total_cost;
        r.l_total = loss_cfg.alpha * r.l_w + loss_cfg.beta * r.l_q;
      }
      if (!std::isfinite(r.l_total)) {
        throw TrainingError("non-finite loss at step " + std::to_string(step + 1),
                            diagnostic(state, step + 1, scene, r));
      }
      log.l_w += r.l_w * inv_batch;
      log.l_q += r.l_q * inv_batch;
      log.l_total += r.l_total * inv_batch;
    }

    ToyModel model_grad = state.model.zeros_like();
    scale_inplace(grads.preds.logits, inv_batch);
    scale_inplace(grads.preds.boxes, inv_batch);
    state.model.backward(head_cache, grads.preds, model_grad);
    scale_tensors(grads.probe.tensors(), inv_batch);

    const auto mp = state.model.tensors();
    const auto mg = model_grad.tensors();
    adam_step(mp, mg, state.model_opt, tc.adam);
    const auto pp = state.probe.tensors();
    const auto pg = grads.probe.tensors();
    adam_step(pp, pg, state.probe_opt, tc.probe_adam);

    const bool last = state.step + 1 == end;
    if (!probe_set.empty() && ((step + 1) % tc.eval_every == 0 || last)) {
      log.purity = evaluate(state.model, state.probe, probe_set, probe_cfg, loss_cfg, tc.iou_threshold,
                            tc.small_area)
                       .purity;
    }
    if ((step + 1) % tc.log_every == 0 || last) {
      if (on_log) on_log(log);
    }
    logs.push_back(log);
  }
  return logs;
}

namespace {

std::vector<TensorRef> adam_tensors(AdamState& s, const std::vector<TensorRef>& params, const std::string& prefix) {
  std::vector<TensorRef> out;
  if (s.m.empty()) {
    for (const auto& p : params) {
      s.m.emplace_back(p.data.size(), 0.0);
      s.v.emplace_back(p.data.size(), 0.0);
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back({prefix + ".m." + params[i].name, s.m[i], params[i].rows, params[i].cols});
    out.push_back({prefix + ".v." + params[i].name, s.v[i], params[i].rows, params[i].cols});
  }
  return out;
}

std::vector<TensorRef> all_tensors(TrainState& state) {
  auto probe = state.probe.tensors();
  auto model = state.model.tensors();
  std::vector<TensorRef> out = probe;
  out.insert(out.end(), model.begin(), model.end());
  auto pa = adam_tensors(state.probe_opt, probe, "adam.probe");
  auto ma = adam_tensors(state.model_opt, model, "adam.model");
  out.insert(out.end(), pa.begin(), pa.end());
  out.insert(out.end(), ma.begin(), ma.end());
  return out;
}

}  // namespace

json save_train_state(TrainState& state, Objective objective) {
  const auto ts = all_tensors(state);
  json meta{{"step", state.step},
            {"objective", objective_name(objective)},
            {"probe_opt_step", state.probe_opt.step},
            {"model_opt_step", state.model_opt.step},
            {"num_heads", state.probe.num_heads}};
  return make_checkpoint(ts, meta);
}

void load_train_state(const json& doc, TrainState& state) {
  const json& tensors = checkpoint_tensors(doc);
  const auto ts = all_tensors(state);
  tensors_from_json(tensors, ts);
  const json& meta = doc.at("meta");
  state.step = meta.at("step").get<std::size_t>();
  state.probe_opt.step = meta.at("probe_opt_step").get<std::int64_t>();
  state.model_opt.step = meta.at("model_opt_step").get<std::int64_t>();
}

}  // namespace matchfree
