// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "matchfree/bench.hpp"
#include "matchfree/box.hpp"
#include "matchfree/config.hpp"
#include "matchfree/cost.hpp"
#include "matchfree/gt_probe.hpp"
#include "matchfree/hungarian.hpp"
#include "matchfree/losses.hpp"
#include "matchfree/pipeline_check.hpp"
#include "matchfree/scg.hpp"
#include "test_util.hpp"

using namespace matchfree;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

// ---- 1 ---------------------------------------------------------------------

Outcome defaults() {
  const Config c;
  const LossConfig l = c.loss_config();
  Outcome o;
  o.pass = l.cost.cls == 2.0 && l.cost.l1 == 5.0 && l.cost.giou == 2.0 && l.scg.rho == 0.5 && l.alpha == 1.0 &&
           l.beta == 1.0 && config_from_json(nlohmann::json::object()) == c;
  o.detail = "cls=" + fmt(l.cost.cls) + " l1=" + fmt(l.cost.l1) + " giou=" + fmt(l.cost.giou) +
             " rho=" + fmt(l.scg.rho) + " alpha=" + fmt(l.alpha) + " beta=" + fmt(l.beta);
  return o;
}

// ---- 2 ---------------------------------------------------------------------

Outcome efficiency() {
  const Config c;
  BenchSpec spec = c.bench;
  spec.grid = {{20, 300}, {20, 900}};
  spec.methods = {BenchMethod::kHungarian, BenchMethod::kMatchFreeForwardBackward};
  const BenchResult r = run_bench(spec, c.probe, c.loss_config());
  const BenchCell* h3 = r.find(BenchMethod::kHungarian, 20, 300);
  const BenchCell* h9 = r.find(BenchMethod::kHungarian, 20, 900);
  const BenchCell* f3 = r.find(BenchMethod::kMatchFreeForwardBackward, 20, 300);
  const BenchCell* f9 = r.find(BenchMethod::kMatchFreeForwardBackward, 20, 900);
  Outcome o;
  if (!h3 || !h9 || !f3 || !f9) return {false, "missing bench cells"};
  const double rh = h9->median_ms / h3->median_ms;
  const double rf = f9->median_ms / f3->median_ms;
  o.pass = rh > rf && f9->median_ms < h9->median_ms;
  o.detail = "hungarian 300->900 ratio " + fmt(rh) + " vs matchfree fwd+bwd " + fmt(rf) + "; at N=900 " +
             fmt(f9->median_ms) + " ms vs " + fmt(h9->median_ms) + " ms";
  return o;
}

// ---- 3 ---------------------------------------------------------------------

Outcome ablation() {
  const Config c;
  const std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  using cli::AblationParam;
  const auto alpha = cli::run_ablation(c, AblationParam::kAlpha, cli::default_sweep(AblationParam::kAlpha), seeds);
  const auto norm = cli::run_ablation(c, AblationParam::kNorm, cli::default_sweep(AblationParam::kNorm), seeds);
  const auto rho = cli::run_ablation(c, AblationParam::kRho, cli::default_sweep(AblationParam::kRho), {0});
  Outcome o;
  const std::size_t cells = alpha.size() + norm.size() + rho.size();
  o.pass = alpha.size() == 15 && norm.size() == 15 && rho.size() == 9;

  // Rerun one cell of each sweep and require bit-identical rows.
  const auto again_a = cli::run_ablation(c, AblationParam::kAlpha, {"2"}, {3});
  const auto again_n = cli::run_ablation(c, AblationParam::kNorm, {"none"}, {1});
  const bool det = cli::ablation_csv(again_a) == cli::ablation_csv({alpha[13]}) &&
                   cli::ablation_csv(again_n) == cli::ablation_csv({norm[1]});
  o.pass = o.pass && det;

  double worst = -1.0;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    const double none = norm[s].metrics.purity;
    const double sum1 = norm[seeds.size() + s].metrics.purity;
    worst = std::max(worst, none - sum1);
  }
  o.pass = o.pass && worst <= 0.05;
  o.detail = std::to_string(cells) + " cells, deterministic=" + (det ? "yes" : "no") +
             ", max purity shortfall of sum1 vs none " + fmt(std::max(worst, 0.0));
  return o;
}

// ---- 4 ---------------------------------------------------------------------

struct GradInstance {
  GroundTruthSet gts;
  PredictionSet preds;
  GtProbeParams probe;
};

GradInstance grad_instance(std::size_t m, std::size_t n, const GtProbeConfig& pc, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GradInstance g;
  for (std::size_t i = 0; i < m; ++i) {
    g.gts.labels.push_back(static_cast<int>(rng() % 4));
    g.gts.boxes.push_back(oracle::random_box(rng, 0.05, 0.4));
  }
  g.preds.logits = oracle::random_matrix(n, 4, rng, -2, 2);
  for (std::size_t j = 0; j < n; ++j) g.preds.boxes.push_back(oracle::random_box(rng, 0.05, 0.4));
  g.probe = GtProbeParams::init(4, pc, rng);
  return g;
}

Outcome gradients() {
  GtProbeConfig pc;
  pc.hidden_dim = 16;
  LossConfig coupled;
  coupled.detach_cost_in_lw = coupled.detach_corr_in_lq = coupled.detach_pred_in_probe = false;
  const LossConfig routed;
  // Same step as the coupled check: a wider step can straddle the L1 kink when
  // a predicted coordinate sits within 1e-5 of a ground-truth one.
  PipelineCheckOptions fd;
  fd.fd.step = 1e-6;

  double worst_total = 0.0, worst_routed = 0.0;
  std::size_t entries = 0, instances = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (std::size_t m : {0u, 1u, 3u, 5u}) {
      for (std::size_t n : {5u, 25u}) {
        GradInstance g = grad_instance(m, n, pc, 1000 * seed + 10 * m + n);
        ++instances;

        // Fully coupled: the analytic gradient is the derivative of L_total itself.
        Gradients an = Gradients::zeros_like(g.probe, g.preds);
        total_loss_forward_backward(g.gts, g.preds, g.probe, pc, coupled, &an);
        auto f = [&] { return total_loss_forward_backward(g.gts, g.preds, g.probe, pc, coupled, nullptr).report.l_total; };
        auto check = [&](double& x, double a) {
          worst_total = std::max(worst_total, oracle::rel_err(a, oracle::central_diff(f, x, 1e-6)));
          ++entries;
        };
        auto params = g.probe.tensors();
        auto grads = an.probe.tensors();
        for (std::size_t t = 0; t < params.size(); ++t)
          for (std::size_t k = 0; k < params[t].data.size(); ++k) check(params[t].data[k], grads[t].data[k]);
        for (std::size_t k = 0; k < g.preds.logits.size(); ++k)
          check(g.preds.logits.values()[k], an.preds.logits.values()[k]);
        for (std::size_t j = 0; j < g.preds.size(); ++j) {
          Box& b = g.preds.boxes[j];
          double* fields[4] = {&b.cx, &b.cy, &b.w, &b.h};
          for (std::size_t k = 0; k < 4; ++k) check(*fields[k], an.preds.boxes(j, k));
        }

        // Default routing: each gradient descends its own detached objective.
        const PipelineCheckResult r = pipeline_gradcheck(g.gts, g.preds, g.probe, pc, routed, fd);
        worst_routed = std::max(worst_routed, r.overall().max_rel_error);
      }
    }
  }
  Outcome o;
  o.pass = worst_total <= 1e-4 && worst_routed <= 1e-4;
  o.detail = std::to_string(instances) + " instances, " + std::to_string(entries) +
             " entries; max rel err coupled " + fmt(worst_total) + ", default routing " + fmt(worst_routed);
  return o;
}

// ---- 5 ---------------------------------------------------------------------

Outcome matching() {
  std::mt19937_64 rng(5);
  std::size_t mismatches = 0, count = 0;
  for (int t = 0; t < 1200; ++t) {
    const std::size_t a = 1 + rng() % 8, b = 1 + rng() % 9;
    const bool flip = rng() % 2;
    Matrix c(flip ? b : a, flip ? a : b);
    // Integer costs keep every sum exact, so equality can be demanded.
    for (double& v : c.values()) v = static_cast<double>(rng() % 101);
    const double best = oracle::brute_force_min(c);
    for (auto pad : {HungarianPadding::kSquare, HungarianPadding::kRectangular}) {
      const Assignment as = hungarian_match(c, pad);
      mismatches += as.total_cost != best || assignment_cost(c, as.pairs) != best ||
                    as.pairs.size() != std::min(c.rows(), c.cols());
    }
    ++count;
  }
  return {mismatches == 0, std::to_string(count) + " instances x 2 paddings, " + std::to_string(mismatches) +
                               " mismatches against exhaustive search"};
}

// ---- 6 ---------------------------------------------------------------------

Outcome scg_rules() {
  std::mt19937_64 rng(6);
  std::size_t bad_trace = 0, bad_sum = 0, bad_mono = 0, count = 0;
  const NormMode modes[] = {NormMode::kNone, NormMode::kSum1, NormMode::kMax};
  for (int t = 0; t < 600; ++t) {
    const std::size_t m = 1 + rng() % 6, n = 1 + rng() % 8;
    Matrix a = oracle::softmax_rows(oracle::random_matrix(m, n, rng, -3, 3));
    if (t % 4 == 0)  // coarse values force ties
      for (double& v : a.values()) v = std::round(v * 8) / 8;
    ++count;
    for (NormMode norm : modes) {
      ScgConfig cfg;
      cfg.norm = norm;
      cfg.rho = 0.1 + 0.8 * std::uniform_real_distribution<double>()(rng);
      const ScgTrace got = sparse_correspondence(a, cfg);
      const oracle::ScgRef ref = oracle::scg(a, cfg.rho, norm, cfg.eps);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
          bad_trace += got.sparse.kept(i, j) != ref.keep[i][j] ||
                       std::abs(got.normalized.values(i, j) - ref.normalized(i, j)) > 1e-12;
      if (norm == NormMode::kSum1) {
        for (std::size_t i = 0; i < m; ++i) {
          if (got.normalized.row_support(i) == 0) continue;
          double s = 0;
          for (double v : got.normalized.values.row(i)) s += v;
          bad_sum += std::abs(s - 1.0) > 1e-6;
        }
      }
    }
    std::vector<std::uint8_t> prev;
    for (int k = 1; k <= 9; ++k) {
      ScgConfig cfg;
      cfg.rho = 0.1 * k;
      const ScgTrace tr = sparse_correspondence(a, cfg);
      if (!prev.empty())
        for (std::size_t e = 0; e < prev.size(); ++e) bad_mono += tr.sparse.mask[e] && !prev[e];
      prev = tr.sparse.mask;
    }
  }
  return {bad_trace + bad_sum + bad_mono == 0,
          std::to_string(count) + " matrices; trace mismatches " + std::to_string(bad_trace) + ", SUM1 row errors " +
              std::to_string(bad_sum) + ", monotonicity violations " + std::to_string(bad_mono)};
}

// ---- 7 ---------------------------------------------------------------------

Outcome dense_invariants() {
  const Config c;
  std::mt19937_64 rng(7);
  double worst_row = 0.0, worst_a = 0.0, worst_c = 0.0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t m = 1 + rng() % 6, n = 1 + rng() % 30;
    GradInstance g = grad_instance(m, n, c.probe, rng());
    const Matrix a = correspondence(g.gts, g.preds, g.probe, c.probe).values;
    const Matrix cost = broadcast_cost(g.gts, g.preds, c.cost).values;
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0;
      for (double v : a.row(i)) s += v;
      worst_row = std::max(worst_row, std::abs(s - 1.0));
    }
    std::vector<std::size_t> pr(m), pc(n);
    std::iota(pr.begin(), pr.end(), 0);
    std::iota(pc.begin(), pc.end(), 0);
    std::shuffle(pr.begin(), pr.end(), rng);
    std::shuffle(pc.begin(), pc.end(), rng);
    GroundTruthSet gp;
    for (std::size_t i : pr) {
      gp.labels.push_back(g.gts.labels[i]);
      gp.boxes.push_back(g.gts.boxes[i]);
    }
    PredictionSet qp{Matrix(n, 4), {}};
    for (std::size_t j = 0; j < n; ++j) {
      qp.boxes.push_back(g.preds.boxes[pc[j]]);
      for (std::size_t k = 0; k < 4; ++k) qp.logits(j, k) = g.preds.logits(pc[j], k);
    }
    const Matrix a2 = correspondence(gp, qp, g.probe, c.probe).values;
    const Matrix c2 = broadcast_cost(gp, qp, c.cost).values;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        worst_a = std::max(worst_a, std::abs(a2(i, j) - a(pr[i], pc[j])));
        worst_c = std::max(worst_c, std::abs(c2(i, j) - cost(pr[i], pc[j])));
      }
  }
  return {worst_row <= 1e-9 && worst_a <= 1e-12 && worst_c <= 1e-12,
          "max |row sum - 1| " + fmt(worst_row) + ", permutation deviation A " + fmt(worst_a) + ", C " +
              fmt(worst_c)};
}

// ---- 8 ---------------------------------------------------------------------

Outcome convergence() {
  const Config c;
  const cli::RunResult mf = cli::train_and_evaluate(c, Objective::kMatchFree);
  const cli::RunResult hu = cli::train_and_evaluate(c, Objective::kHungarian);
  const double pm = mf.metrics.purity, ph = hu.metrics.purity;
  return {pm >= 0.9 && std::abs(pm - ph) <= 0.1,
          "match-free purity " + fmt(pm) + ", hungarian purity " + fmt(ph) + " over " +
              std::to_string(mf.metrics.num_gts) + " held-out objects (" + std::to_string(c.toy.train.eval_scenes) +
              " scenes)"};
}

// ---- 9 ---------------------------------------------------------------------

Outcome geometry() {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-0.5, 1.5), s(0.0, 1.0);
  double lo = 1.0, hi = -1.0;
  for (int t = 0; t < 100000; ++t) {
    const Box a{u(rng), u(rng), s(rng), s(rng)}, b{u(rng), u(rng), s(rng), s(rng)};
    const double g = giou(a, b);
    lo = std::min(lo, g);
    hi = std::max(hi, g);
  }
  const Box unit = from_corners({0, 0, 1, 1});
  const double same = giou(unit, unit);
  const double apart = giou(unit, from_corners({2, 2, 3, 3}));
  const bool ok = lo >= -1.0 && hi <= 1.0 && std::abs(same - 1.0) <= 1e-12 && std::abs(apart + 7.0 / 9.0) <= 1e-12;
  return {ok, "range [" + fmt(lo) + ", " + fmt(hi) + "] over 1e5 pairs; identical " + fmt(same) + ", disjoint " +
                  std::to_string(apart)};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all{
      {1, "hyper-parameter defaults", defaults},
      {2, "efficiency scaling shape", efficiency},
      {3, "ablation harness", ablation},
      {4, "gradient suite", gradients},
      {5, "matching oracle", matching},
      {6, "sparse correspondence rules", scg_rules},
      {7, "dense correspondence invariants", dense_invariants},
      {8, "toy convergence", convergence},
      {9, "geometry suite", geometry},
  };
  int failed = 0;
  for (const auto& c : all) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %d %s: %s (%s) [%.1fs]\n", c.id, c.name, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(all.size()) - failed, all.size());
  return failed == 0 ? 0 : 1;
}
