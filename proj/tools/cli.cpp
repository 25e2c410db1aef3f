#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "matchfree/bench.hpp"
#include "matchfree/checkpoint.hpp"
#include "matchfree/hungarian.hpp"
#include "matchfree/pipeline_check.hpp"

namespace matchfree::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory '" + dir.string() + "'");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

std::string matrix_csv(const Matrix& m) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) os << (j ? "," : "") << m(i, j);
    os << '\n';
  }
  return os.str();
}

void print_matrix(std::ostream& out, const std::string& title, const Matrix& m) {
  out << title << " (" << m.rows() << "x" << m.cols() << ")\n";
  const auto flags = out.flags();
  const auto prec = out.precision();
  out << std::fixed << std::setprecision(4);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out << "  ";
    for (std::size_t j = 0; j < m.cols(); ++j) out << std::setw(9) << m(i, j);
    out << '\n';
  }
  out.flags(flags);
  out.precision(prec);
}

Config load_or_default(const std::string& path) { return path.empty() ? Config{} : load_config(path); }

PredictionSet random_predictions(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> logit(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> size(0.05, 0.4);
  PredictionSet p;
  p.logits = Matrix(n, k);
  for (double& v : p.logits.values()) v = logit(rng);
  for (std::size_t j = 0; j < n; ++j) {
    Box b;
    b.w = size(rng);
    b.h = size(rng);
    b.cx = 0.5 * b.w + unit(rng) * (1.0 - b.w);
    b.cy = 0.5 * b.h + unit(rng) * (1.0 - b.h);
    p.boxes.push_back(b);
  }
  return p;
}

GtProbeParams seeded_probe(const Config& cfg) {
  std::mt19937_64 rng(cfg.probe.seed);
  return GtProbeParams::init(cfg.toy.scene.num_classes, cfg.probe, rng);
}

// ---- assign -------------------------------------------------------------

struct AssignArgs {
  std::string config, scene, out, checkpoint;
  std::optional<std::uint64_t> random_seed;
  std::optional<std::size_t> queries;
};

int cmd_assign(const AssignArgs& a, std::ostream& out) {
  const Config cfg = load_or_default(a.config);
  const LossConfig loss_cfg = cfg.loss_config();
  if (a.scene.empty() == !a.random_seed) throw ConfigError("assign needs exactly one of a scene file or --random SEED");

  GroundTruthSet gts;
  std::uint64_t seed = a.random_seed.value_or(0);
  if (a.random_seed) {
    gts = generate_scene(cfg.toy.scene, seed).gts;
  } else {
    gts = load_scene(a.scene);
  }
  gts.validate(cfg.toy.scene.num_classes);

  PredictionSet preds;
  GtProbeParams probe;
  if (!a.checkpoint.empty()) {
    TrainState state = init_train_state(cfg.toy, cfg.probe);
    load_train_state(read_json_file(a.checkpoint), state);
    preds = state.model.predict();
    probe = state.probe;
  } else {
    preds = random_predictions(a.queries.value_or(cfg.toy.model.num_queries), cfg.toy.scene.num_classes,
                               derive_seed(seed, 1));
    probe = seeded_probe(cfg);
  }

  const CostMatrix cost = broadcast_cost(gts, preds, loss_cfg.cost, loss_cfg.cls_mode, true);
  const LossOutput lo = loss_forward_backward_with_cost(gts, preds, cost, probe, cfg.probe, loss_cfg, nullptr);
  const Assignment match = gts.size() ? hungarian_match(lo.cost.values) : Assignment{};
  const ScgTrace& t = lo.scg;

  out << "M=" << gts.size() << " N=" << preds.size() << " K=" << cfg.toy.scene.num_classes << '\n';
  print_matrix(out, "C", lo.cost.values);
  print_matrix(out, "A", lo.dense.values);
  print_matrix(out, "A_hat", t.normalized.values);
  out << "tau";
  out << std::setprecision(6);
  for (double v : t.tau) out << ' ' << v;
  out << '\n';

  bool subset = true;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    for (std::size_t j = 0; j < preds.size(); ++j) {
      if (t.normalized.kept(i, j) && !(lo.dense.values(i, j) >= t.tau[j])) subset = false;
    }
  }
  out << "support_within_threshold " << (subset ? "yes" : "no") << '\n';
  out << "hungarian";
  for (const auto& [i, j] : match.pairs) out << ' ' << i << "->" << j;
  out << " total=" << match.total_cost << '\n';
  out << "L_w=" << lo.report.l_w << " L_q=" << lo.report.l_q << " L_total=" << lo.report.l_total << '\n';

  if (!a.out.empty()) {
    const fs::path dir(a.out);
    ensure_dir(dir);
    write_text(dir / "C.csv", matrix_csv(lo.cost.values));
    if (lo.cost.components) {
      write_text(dir / "C_cls.csv", matrix_csv(lo.cost.components->cls));
      write_text(dir / "C_l1.csv", matrix_csv(lo.cost.components->l1));
      write_text(dir / "C_giou.csv", matrix_csv(lo.cost.components->giou));
    }
    write_text(dir / "A.csv", matrix_csv(lo.dense.values));
    write_text(dir / "A_rowmax.csv", matrix_csv(t.row_filtered));
    write_text(dir / "A_sparse.csv", matrix_csv(t.sparse.values));
    write_text(dir / "A_hat.csv", matrix_csv(t.normalized.values));
    std::ostringstream tau;
    tau.precision(17);
    tau << "query,a_max,tau\n";
    for (std::size_t j = 0; j < t.tau.size(); ++j) tau << j << ',' << t.a_max[j] << ',' << t.tau[j] << '\n';
    write_text(dir / "tau.csv", tau.str());
    std::ostringstream pairs;
    pairs.precision(17);
    pairs << "gt,query,cost\n";
    for (const auto& [i, j] : match.pairs) pairs << i << ',' << j << ',' << lo.cost.values(i, j) << '\n';
    write_text(dir / "pairs.csv", pairs.str());
    write_json_file(dir / "scene.json", scene_to_json(gts), 2);
  }
  return kOk;
}

// ---- gradcheck ----------------------------------------------------------

struct GradcheckArgs {
  std::string config;
  std::uint64_t seed = 0;
  std::size_t trials = 2;
  std::optional<std::size_t> gts;
  std::size_t queries = 10;
  double tol = 1e-4;
  std::optional<std::size_t> corrupt;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  const Config cfg = load_or_default(a.config);
  const LossConfig loss_cfg = cfg.loss_config();
  if (!(a.tol > 0.0)) throw ConfigError("--tol must be positive");
  if (a.queries == 0) throw ConfigError("--queries must be positive");
  const std::size_t k = cfg.toy.scene.num_classes;
  bool ok = true;
  double worst = 0.0;
  for (std::size_t trial = 0; trial < a.trials; ++trial) {
    const std::uint64_t s = derive_seed(a.seed, trial);
    GroundTruthSet gts = generate_scene(cfg.toy.scene, s).gts;
    if (a.gts) {
      SceneConfig sc = cfg.toy.scene;
      sc.placement = Placement::kUniform;
      sc.min_gts = sc.max_gts = *a.gts;
      sc.min_separation = 0.0;
      gts = *a.gts ? generate_scene(sc, s).gts : GroundTruthSet{};
    }
    const PredictionSet preds = random_predictions(a.queries, k, derive_seed(s, 1));
    std::mt19937_64 rng(derive_seed(cfg.probe.seed, s));
    const GtProbeParams probe = GtProbeParams::init(k, cfg.probe, rng);
    PipelineCheckOptions opts;
    opts.corrupt_index = a.corrupt;
    const PipelineCheckResult r = pipeline_gradcheck(gts, preds, probe, cfg.probe, loss_cfg, opts);
    const bool pass = r.passed(a.tol);
    ok = ok && pass;
    worst = std::max(worst, r.overall().max_rel_error);
    out << "trial " << trial << " M=" << gts.size() << " N=" << preds.size() << " loss=" << r.loss
        << " probe_rel=" << r.probe.max_rel_error << " (" << r.probe.checked << " entries)"
        << " pred_rel=" << r.preds.max_rel_error << " (" << r.preds.checked << " entries) "
        << (pass ? "PASS" : "FAIL") << '\n';
  }
  out << (ok ? "PASS" : "FAIL") << " max_rel_error=" << worst << " tol=" << a.tol << '\n';
  return ok ? kOk : kAssertion;
}

// ---- train --------------------------------------------------------------

struct TrainArgs {
  std::string config, objective = "matchfree", out, resume;
  std::optional<std::size_t> steps;
  std::optional<std::uint64_t> seed;
};

Objective parse_objective(const std::string& s) {
  if (s == "matchfree") return Objective::kMatchFree;
  if (s == "hungarian") return Objective::kHungarian;
  throw ConfigError("--objective must be 'matchfree' or 'hungarian'");
}

std::vector<Scene> eval_set(const Config& cfg) {
  return generate_scenes(cfg.toy.scene, cfg.toy.train.eval_seed, cfg.toy.train.eval_scenes);
}

EvalMetrics evaluate_state(const TrainState& s, const Config& cfg) {
  const auto& tc = cfg.toy.train;
  return evaluate(s.model, s.probe, eval_set(cfg), cfg.probe, cfg.loss_config(), tc.iou_threshold, tc.small_area);
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  Config cfg = load_or_default(a.config);
  if (a.steps) cfg.toy.train.steps = *a.steps;
  if (a.seed) cfg.toy.train.seed = *a.seed;
  const Objective objective = parse_objective(a.objective);
  const fs::path dir(a.out);
  ensure_dir(dir);

  TrainState state = init_train_state(cfg.toy, cfg.probe);
  if (!a.resume.empty()) {
    const json doc = read_json_file(a.resume);
    load_train_state(doc, state);
    if (doc.at("meta").at("objective").get<std::string>() != objective_name(objective)) {
      throw ConfigError("checkpoint was trained with a different objective");
    }
  }
  if (state.step > cfg.toy.train.steps) {
    throw ConfigError("checkpoint is already past the requested step count");
  }

  const fs::path log_path = dir / "train_log.jsonl";
  std::ofstream log(log_path, a.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw IoError("cannot open '" + log_path.string() + "'");
  auto on_log = [&](const StepLog& l) {
    log << l.to_json().dump() << '\n';
    if (l.purity) out << "step " << l.step << " L_total=" << l.l_total << " purity=" << *l.purity << '\n';
  };

  try {
    train(state, objective, cfg.toy.train.steps - state.step, cfg.toy, cfg.probe, cfg.loss_config(), on_log);
  } catch (const TrainingError& e) {
    write_json_file(dir / "diagnostic.json", e.diagnostic(), 2);
    throw;
  }
  log.flush();
  if (!log) throw IoError("failed writing '" + log_path.string() + "'");

  const EvalMetrics m = evaluate_state(state, cfg);
  write_json_file(dir / "checkpoint.json", save_train_state(state, objective));
  const json metrics{{"objective", objective_name(objective)},
                     {"steps", state.step},
                     {"seed", cfg.toy.train.seed},
                     {"eval_scenes", cfg.toy.train.eval_scenes},
                     {"metrics", m.to_json()},
                     {"config", config_to_json(cfg)}};
  write_json_file(dir / "metrics.json", metrics, 2);
  out << objective_name(objective) << " steps=" << state.step << " purity=" << m.purity
      << " matched_iou=" << m.matched_iou << " class_accuracy=" << m.class_accuracy << '\n';
  return kOk;
}

// ---- bench --------------------------------------------------------------

struct BenchArgs {
  std::string config, out;
  bool do_assert = false;
};

int cmd_bench(const BenchArgs& a, std::ostream& out) {
  const Config cfg = load_or_default(a.config);
  const BenchResult r = run_bench(cfg.bench, cfg.probe, cfg.loss_config());
  const fs::path dir(a.out.empty() ? "." : a.out);
  ensure_dir(dir);
  const fs::path csv = dir / "bench.csv";
  emit_report(r, csv);
  std::ifstream f(csv);
  out << f.rdbuf();
  if (!a.do_assert) return kOk;
  bool ok = true;
  for (const auto& c : check_scaling(r)) {
    out << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
    ok = ok && c.passed;
  }
  return ok ? kOk : kAssertion;
}

// ---- ablate -------------------------------------------------------------

struct AblateArgs {
  std::string config, param, values, seeds, out;
  std::optional<std::size_t> steps;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out) {
  Config cfg = load_or_default(a.config);
  if (a.steps) cfg.toy.train.steps = *a.steps;
  const AblationParam p = parse_ablation_param(a.param);
  const std::vector<std::string> values = a.values.empty() ? default_sweep(p) : split_csv(a.values);
  std::vector<std::uint64_t> seeds;
  for (const auto& s : split_csv(a.seeds)) {
    try {
      seeds.push_back(std::stoull(s));
    } catch (const std::exception&) {
      throw ConfigError("--seeds: '" + s + "' is not an integer");
    }
  }
  if (seeds.empty()) seeds.push_back(cfg.toy.train.seed);
  for (const auto& v : values) (void)apply_setting(cfg, p, v);  // fail fast on bad values

  const std::vector<AblationRow> rows = run_ablation(cfg, p, values, seeds);
  const std::string csv = ablation_csv(rows);
  if (!a.out.empty()) {
    ensure_dir(a.out);
    write_text(fs::path(a.out) / "ablation.csv", csv);
  }
  out << csv;
  return kOk;
}

}  // namespace

// ---- shared helpers -----------------------------------------------------

RunResult train_and_evaluate(const Config& cfg, Objective objective) {
  TrainState state = init_train_state(cfg.toy, cfg.probe);
  RunResult r;
  r.logs = train(state, objective, cfg.toy.train.steps, cfg.toy, cfg.probe, cfg.loss_config());
  r.metrics = evaluate_state(state, cfg);
  return r;
}

AblationParam parse_ablation_param(const std::string& s) {
  if (s == "alpha") return AblationParam::kAlpha;
  if (s == "rho") return AblationParam::kRho;
  if (s == "norm") return AblationParam::kNorm;
  throw ConfigError("--param must be alpha, rho or norm");
}

const char* ablation_param_name(AblationParam p) {
  switch (p) {
    case AblationParam::kAlpha:
      return "alpha";
    case AblationParam::kRho:
      return "rho";
    case AblationParam::kNorm:
      return "norm";
  }
  return "?";
}

std::vector<std::string> default_sweep(AblationParam p) {
  switch (p) {
    case AblationParam::kAlpha:
      return {"0.5", "1", "2"};
    case AblationParam::kRho:
      return {"0.1", "0.2", "0.3", "0.4", "0.5", "0.6", "0.7", "0.8", "0.9"};
    case AblationParam::kNorm:
      return {"none", "sum1", "max"};
  }
  return {};
}

Config apply_setting(const Config& cfg, AblationParam p, const std::string& value) {
  Config c = cfg;
  auto number = [&] {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != value.size()) throw ConfigError("sweep value '" + value + "' is not a number");
    return v;
  };
  switch (p) {
    case AblationParam::kAlpha:
      c.loss.alpha = number();
      break;
    case AblationParam::kRho:
      c.scg.rho = number();
      break;
    case AblationParam::kNorm:
      c.scg.norm = parse_norm_mode(value);
      break;
  }
  c.validate();
  return c;
}

std::vector<AblationRow> run_ablation(const Config& cfg, AblationParam p, const std::vector<std::string>& values,
                                      const std::vector<std::uint64_t>& seeds) {
  std::vector<AblationRow> rows;
  for (const auto& v : values) {
    for (std::uint64_t seed : seeds) {
      Config c = apply_setting(cfg, p, v);
      c.toy.train.seed = seed;
      const RunResult r = train_and_evaluate(c, Objective::kMatchFree);
      AblationRow row;
      row.param = ablation_param_name(p);
      row.value = v;
      row.seed = seed;
      row.metrics = r.metrics;
      row.final_loss = r.logs.empty() ? 0.0 : r.logs.back().l_total;
      rows.push_back(row);
    }
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << "param,value,seed,purity,matched_iou,class_accuracy,mean_surviving,hungarian_purity,final_loss\n";
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    os << r.param << ',' << r.value << ',' << r.seed << ',' << m.purity << ',' << m.matched_iou << ','
       << m.class_accuracy << ',' << m.mean_surviving << ',' << m.hungarian_purity << ',' << r.final_loss << '\n';
  }
  return os.str();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Match-free set-prediction supervision toolkit"};
  app.require_subcommand(1);

  AssignArgs assign;
  auto* sa = app.add_subcommand("assign", "Print C, A, A_hat and the Hungarian pairs for one scene");
  sa->add_option("--config", assign.config, "JSON config");
  sa->add_option("--scene", assign.scene, "Scene JSON file");
  sa->add_option("--random", assign.random_seed, "Generate the scene from this seed");
  sa->add_option("--queries", assign.queries, "Number of random predictions");
  sa->add_option("--checkpoint", assign.checkpoint, "Use predictions and probe from a training checkpoint");
  sa->add_option("--out", assign.out, "Directory for CSV dumps");

  GradcheckArgs gc;
  auto* sg = app.add_subcommand("gradcheck", "Finite-difference check of the full loss pipeline");
  sg->add_option("--config", gc.config, "JSON config");
  sg->add_option("--seed", gc.seed, "Base seed");
  sg->add_option("--trials", gc.trials, "Number of random instances");
  sg->add_option("--gts", gc.gts, "Fixed number of ground truths (0 allowed)");
  sg->add_option("--queries", gc.queries, "Number of predictions");
  sg->add_option("--tol", gc.tol, "Max relative error");
  sg->add_option("--corrupt-index", gc.corrupt, "Test hook: corrupt this analytic gradient entry");

  TrainArgs tr;
  auto* st = app.add_subcommand("train", "Train the toy model");
  st->add_option("--config", tr.config, "JSON config");
  st->add_option("--objective", tr.objective, "matchfree or hungarian");
  st->add_option("--out", tr.out, "Output directory")->required();
  st->add_option("--steps", tr.steps, "Total optimizer steps");
  st->add_option("--seed", tr.seed, "Training seed");
  st->add_option("--resume", tr.resume, "Checkpoint to continue from");

  BenchArgs bn;
  auto* sb = app.add_subcommand("bench", "Latency of Hungarian matching vs the match-free losses");
  sb->add_option("--config", bn.config, "JSON config");
  sb->add_option("--out", bn.out, "Output directory for bench.csv");
  sb->add_flag("--assert", bn.do_assert, "Enforce the scaling-shape checks");

  AblateArgs ab;
  auto* sx = app.add_subcommand("ablate", "Sweep one hyper-parameter over toy training runs");
  sx->add_option("--config", ab.config, "JSON config");
  sx->add_option("--param", ab.param, "alpha, rho or norm")->required();
  sx->add_option("--values", ab.values, "Comma-separated values (default: the standard grid)");
  sx->add_option("--seeds", ab.seeds, "Comma-separated training seeds");
  sx->add_option("--steps", ab.steps, "Training steps per run");
  sx->add_option("--out", ab.out, "Output directory for ablation.csv");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*sa) return cmd_assign(assign, out);
    if (*sg) return cmd_gradcheck(gc, out);
    if (*st) return cmd_train(tr, out);
    if (*sb) return cmd_bench(bn, out);
    if (*sx) return cmd_ablate(ab, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const TrainingError& e) {
    err << "error: " << e.what() << " (diagnostic written)\n";
    return kAssertion;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  }
  return kValidation;
}

}  // namespace matchfree::cli
