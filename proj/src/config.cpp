#include "matchfree/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace matchfree {

using nlohmann::json;

namespace {

// Reads keys from one JSON object and rejects any it did not consume.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  // Present sub-object, or nullptr.
  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(path_ + ": unknown key '" + it.key() + "'");
    }
  }

  const std::string& path() const { return path_; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

const char* cls_mode_name(ClassCostMode m) { return m == ClassCostMode::kNll ? "nll" : "focal"; }

ClassCostMode parse_cls_mode(const std::string& s) {
  if (s == "nll") return ClassCostMode::kNll;
  if (s == "focal") return ClassCostMode::kFocal;
  throw ConfigError("cost.cls_mode: expected 'nll' or 'focal', got '" + s + "'");
}

const char* pred_input_name(PredInput p) { return p == PredInput::kLogits ? "logits" : "probabilities"; }

PredInput parse_pred_input(const std::string& s) {
  if (s == "logits") return PredInput::kLogits;
  if (s == "probabilities") return PredInput::kProbabilities;
  throw ConfigError("probe.pred_input: expected 'logits' or 'probabilities', got '" + s + "'");
}

const char* placement_name(Placement p) { return p == Placement::kGrid ? "grid" : "uniform"; }

Placement parse_placement(const std::string& s) {
  if (s == "grid") return Placement::kGrid;
  if (s == "uniform") return Placement::kUniform;
  throw ConfigError("toy.scene.placement: expected 'grid' or 'uniform', got '" + s + "'");
}

void read_scene(const json& j, SceneConfig& s) {
  Section sec(j, "toy.scene");
  sec.read("num_classes", s.num_classes);
  sec.read("min_gts", s.min_gts);
  sec.read("max_gts", s.max_gts);
  std::string placement = placement_name(s.placement);
  sec.read("placement", placement);
  s.placement = parse_placement(placement);
  sec.read("grid", s.grid);
  sec.read("jitter", s.jitter);
  sec.read("min_size", s.min_size);
  sec.read("max_size", s.max_size);
  sec.read("min_separation", s.min_separation);
  sec.read("max_retries", s.max_retries);
  sec.read("label_noise", s.label_noise);
  sec.read("layout_seed", s.layout_seed);
  sec.finish();
}

void read_model(const json& j, ToyModelConfig& m) {
  Section sec(j, "toy.model");
  sec.read("num_queries", m.num_queries);
  sec.read("query_dim", m.query_dim);
  sec.read("head_hidden", m.head_hidden);
  sec.read("head_layers", m.head_layers);
  sec.read("query_init_scale", m.query_init_scale);
  sec.read("reference_boxes", m.reference_boxes);
  sec.read("reference_size", m.reference_size);
  sec.read("zero_init_output", m.zero_init_output);
  sec.finish();
}

void read_train(const json& j, TrainConfig& t) {
  Section sec(j, "toy.train");
  sec.read("steps", t.steps);
  sec.read("batch_size", t.batch_size);
  sec.read("lr", t.adam.lr);
  sec.read("beta1", t.adam.beta1);
  sec.read("beta2", t.adam.beta2);
  sec.read("adam_eps", t.adam.eps);
  sec.read("weight_decay", t.adam.weight_decay);
  // The probe group shares betas and eps with the model group.
  sec.read("probe_lr", t.probe_adam.lr);
  sec.read("probe_weight_decay", t.probe_adam.weight_decay);
  t.probe_adam.beta1 = t.adam.beta1;
  t.probe_adam.beta2 = t.adam.beta2;
  t.probe_adam.eps = t.adam.eps;
  sec.read("seed", t.seed);
  sec.read("log_every", t.log_every);
  sec.read("eval_every", t.eval_every);
  sec.read("probe_scenes", t.probe_scenes);
  sec.read("probe_seed", t.probe_seed);
  sec.read("eval_scenes", t.eval_scenes);
  sec.read("eval_seed", t.eval_seed);
  sec.read("iou_threshold", t.iou_threshold);
  sec.read("small_area", t.small_area);
  sec.finish();
}

}  // namespace

const char* norm_mode_name(NormMode m) {
  switch (m) {
    case NormMode::kNone:
      return "none";
    case NormMode::kSum1:
      return "sum1";
    case NormMode::kMax:
      return "max";
  }
  return "?";
}

NormMode parse_norm_mode(const std::string& s) {
  if (s == "none") return NormMode::kNone;
  if (s == "sum1") return NormMode::kSum1;
  if (s == "max") return NormMode::kMax;
  throw ConfigError("norm mode must be 'none', 'sum1' or 'max', got '" + s + "'");
}

LossConfig Config::loss_config() const {
  LossConfig l = loss;
  l.cost = cost;
  l.cls_mode = cls_mode;
  l.scg = scg;
  return l;
}

void Config::validate() const {
  if (version != kConfigVersion) {
    throw ConfigError("unsupported config version " + std::to_string(version));
  }
  try {
    loss_config().validate();
    probe.validate();
    toy.scene.validate();
    toy.model.validate();
    toy.train.validate();
    bench.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
}

Config config_from_json(const json& j) {
  Config c;
  Section top(j, "config");
  top.read("version", c.version);

  if (const json* s = top.child("cost")) {
    Section sec(*s, "cost");
    sec.read("cls", c.cost.cls);
    sec.read("l1", c.cost.l1);
    sec.read("giou", c.cost.giou);
    std::string mode = cls_mode_name(c.cls_mode);
    sec.read("cls_mode", mode);
    c.cls_mode = parse_cls_mode(mode);
    sec.finish();
  }
  if (const json* s = top.child("scg")) {
    Section sec(*s, "scg");
    sec.read("rho", c.scg.rho);
    sec.read("eps", c.scg.eps);
    std::string norm = norm_mode_name(c.scg.norm);
    sec.read("norm", norm);
    c.scg.norm = parse_norm_mode(norm);
    sec.finish();
  }
  if (const json* s = top.child("loss")) {
    Section sec(*s, "loss");
    sec.read("alpha", c.loss.alpha);
    sec.read("beta", c.loss.beta);
    sec.read("detach_cost_in_lw", c.loss.detach_cost_in_lw);
    sec.read("detach_corr_in_lq", c.loss.detach_corr_in_lq);
    sec.read("detach_pred_in_probe", c.loss.detach_pred_in_probe);
    sec.read("per_gt_mean", c.loss.per_gt_mean);
    sec.finish();
  }
  if (const json* s = top.child("probe")) {
    Section sec(*s, "probe");
    sec.read("hidden_dim", c.probe.hidden_dim);
    sec.read("mlp_layers", c.probe.mlp_layers);
    sec.read("num_heads", c.probe.num_heads);
    sec.read("compute_values", c.probe.compute_values);
    std::string input = pred_input_name(c.probe.pred_input);
    sec.read("pred_input", input);
    c.probe.pred_input = parse_pred_input(input);
    sec.read("box_input_scale", c.probe.box_input_scale);
    sec.read("seed", c.probe.seed);
    sec.finish();
  }
  if (const json* s = top.child("toy")) {
    Section sec(*s, "toy");
    if (const json* x = sec.child("scene")) read_scene(*x, c.toy.scene);
    if (const json* x = sec.child("model")) read_model(*x, c.toy.model);
    if (const json* x = sec.child("train")) read_train(*x, c.toy.train);
    sec.finish();
  }
  if (const json* s = top.child("bench")) {
    Section sec(*s, "bench");
    if (const json* g = sec.child("grid")) {
      c.bench.grid.clear();
      if (!g->is_array()) throw ConfigError("bench.grid: expected an array of [M, N] pairs");
      for (const auto& cell : *g) {
        if (!cell.is_array() || cell.size() != 2 || !cell[0].is_number_unsigned() || !cell[1].is_number_unsigned()) {
          throw ConfigError("bench.grid: each cell must be [M, N] with non-negative integers");
        }
        c.bench.grid.emplace_back(cell[0].get<std::size_t>(), cell[1].get<std::size_t>());
      }
    }
    sec.read("repetitions", c.bench.repetitions);
    sec.read("warmup", c.bench.warmup);
    if (const json* m = sec.child("methods")) {
      c.bench.methods.clear();
      if (!m->is_array()) throw ConfigError("bench.methods: expected an array of names");
      for (const auto& name : *m) {
        try {
          c.bench.methods.push_back(parse_bench_method(name.get<std::string>()));
        } catch (const std::exception& e) {
          throw ConfigError(std::string("bench.methods: ") + e.what());
        }
      }
    }
    sec.read("num_classes", c.bench.num_classes);
    sec.read("seed", c.bench.seed);
    sec.read("min_sample_ms", c.bench.min_sample_ms);
    sec.finish();
  }
  top.finish();
  c.validate();
  return c;
}

json config_to_json(const Config& c) {
  json bench_grid = json::array();
  for (const auto& [m, n] : c.bench.grid) bench_grid.push_back({m, n});
  json methods = json::array();
  for (auto m : c.bench.methods) methods.push_back(bench_method_name(m));
  const auto& sc = c.toy.scene;
  const auto& md = c.toy.model;
  const auto& tr = c.toy.train;
  return {
      {"version", c.version},
      {"cost", {{"cls", c.cost.cls}, {"l1", c.cost.l1}, {"giou", c.cost.giou}, {"cls_mode", cls_mode_name(c.cls_mode)}}},
      {"scg", {{"rho", c.scg.rho}, {"eps", c.scg.eps}, {"norm", norm_mode_name(c.scg.norm)}}},
      {"loss",
       {{"alpha", c.loss.alpha},
        {"beta", c.loss.beta},
        {"detach_cost_in_lw", c.loss.detach_cost_in_lw},
        {"detach_corr_in_lq", c.loss.detach_corr_in_lq},
        {"detach_pred_in_probe", c.loss.detach_pred_in_probe},
        {"per_gt_mean", c.loss.per_gt_mean}}},
      {"probe",
       {{"hidden_dim", c.probe.hidden_dim},
        {"mlp_layers", c.probe.mlp_layers},
        {"num_heads", c.probe.num_heads},
        {"compute_values", c.probe.compute_values},
        {"pred_input", pred_input_name(c.probe.pred_input)},
        {"box_input_scale", c.probe.box_input_scale},
        {"seed", c.probe.seed}}},
      {"toy",
       {{"scene",
         {{"num_classes", sc.num_classes},
          {"min_gts", sc.min_gts},
          {"max_gts", sc.max_gts},
          {"placement", placement_name(sc.placement)},
          {"grid", sc.grid},
          {"jitter", sc.jitter},
          {"min_size", sc.min_size},
          {"max_size", sc.max_size},
          {"min_separation", sc.min_separation},
          {"max_retries", sc.max_retries},
          {"label_noise", sc.label_noise},
          {"layout_seed", sc.layout_seed}}},
        {"model",
         {{"num_queries", md.num_queries},
          {"query_dim", md.query_dim},
          {"head_hidden", md.head_hidden},
          {"head_layers", md.head_layers},
          {"query_init_scale", md.query_init_scale},
          {"reference_boxes", md.reference_boxes},
          {"reference_size", md.reference_size},
          {"zero_init_output", md.zero_init_output}}},
        {"train",
         {{"steps", tr.steps},
          {"batch_size", tr.batch_size},
          {"lr", tr.adam.lr},
          {"beta1", tr.adam.beta1},
          {"beta2", tr.adam.beta2},
          {"adam_eps", tr.adam.eps},
          {"weight_decay", tr.adam.weight_decay},
          {"probe_lr", tr.probe_adam.lr},
          {"probe_weight_decay", tr.probe_adam.weight_decay},
          {"seed", tr.seed},
          {"log_every", tr.log_every},
          {"eval_every", tr.eval_every},
          {"probe_scenes", tr.probe_scenes},
          {"probe_seed", tr.probe_seed},
          {"eval_scenes", tr.eval_scenes},
          {"eval_seed", tr.eval_seed},
          {"iou_threshold", tr.iou_threshold},
          {"small_area", tr.small_area}}}}},
      {"bench",
       {{"grid", bench_grid},
        {"repetitions", c.bench.repetitions},
        {"warmup", c.bench.warmup},
        {"methods", methods},
        {"num_classes", c.bench.num_classes},
        {"seed", c.bench.seed},
        {"min_sample_ms", c.bench.min_sample_ms}}},
  };
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

namespace {

std::size_t line_of_byte(const std::string& text, std::size_t byte) {
  const std::size_t end = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(end), '\n'));
}

}  // namespace

GroundTruthSet parse_scene(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    // e.byte is 1-based and points just past the offending character.
    const std::size_t byte = e.byte > 0 ? e.byte - 1 : 0;
    throw ConfigError("scene parse error at line " + std::to_string(line_of_byte(text, byte)) + ": " + e.what());
  }
  Section top(j, "scene");
  const json* gts = top.child("gts");
  top.finish();
  if (!gts || !gts->is_array()) throw ConfigError("scene: 'gts' must be an array");
  GroundTruthSet out;
  for (std::size_t i = 0; i < gts->size(); ++i) {
    const json& g = (*gts)[i];
    const std::string where = "scene.gts[" + std::to_string(i) + "]";
    Section sec(g, where);
    int label = -1;
    std::vector<double> box;
    sec.read("label", label);
    sec.read("box", box);
    sec.finish();
    if (!g.contains("label") || !g.contains("box")) throw ConfigError(where + ": needs 'label' and 'box'");
    if (box.size() != 4) throw ConfigError(where + ".box: expected [cx, cy, w, h]");
    Box b{box[0], box[1], box[2], box[3]};
    try {
      b.validate();
    } catch (const ValidationError& e) {
      throw ConfigError(where + ": " + e.what());
    }
    out.labels.push_back(label);
    out.boxes.push_back(b);
  }
  return out;
}

GroundTruthSet load_scene(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open scene '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_scene(ss.str());
}

json scene_to_json(const GroundTruthSet& gts) {
  json arr = json::array();
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const auto& b = gts.boxes[i];
    arr.push_back({{"label", gts.labels[i]}, {"box", {b.cx, b.cy, b.w, b.h}}});
  }
  return {{"gts", arr}};
}

}  // namespace matchfree
