#include <doctest.h>

#include <cmath>
#include <random>

#include "matchfree/errors.hpp"
#include "matchfree/losses.hpp"
#include "matchfree/pipeline_check.hpp"
#include "test_util.hpp"

using namespace matchfree;

namespace {

struct Fixture {
  GroundTruthSet gts;
  PredictionSet preds;
  GtProbeConfig probe_cfg;
  GtProbeParams probe;
};

Fixture make_fixture(std::size_t m, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Fixture f;
  for (std::size_t i = 0; i < m; ++i) {
    f.gts.labels.push_back(static_cast<int>(rng() % 4));
    f.gts.boxes.push_back(oracle::random_box(rng));
  }
  f.preds.logits = oracle::random_matrix(n, 4, rng, -2, 2);
  for (std::size_t j = 0; j < n; ++j) f.preds.boxes.push_back(oracle::random_box(rng));
  f.probe_cfg.hidden_dim = 16;
  f.probe_cfg.box_input_scale = 3.0;
  f.probe = GtProbeParams::init(4, f.probe_cfg, rng);
  return f;
}

bool all_zero(GtProbeParams& p) {
  for (const TensorRef& t : p.tensors())
    for (double v : t.data)
      if (v != 0.0) return false;
  return true;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.values()[i] - b.values()[i]));
  return d;
}

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("defaults") {
    const LossConfig c;
    CHECK(c.alpha == 1.0);
    CHECK(c.beta == 1.0);
    CHECK(c.detach_cost_in_lw);
    CHECK(c.detach_corr_in_lq);
    CHECK(c.detach_pred_in_probe);
  }

  TEST_CASE("uniform and one-hot weighting identities") {
    std::mt19937_64 rng(1);
    const Matrix c = oracle::random_matrix(3, 4, rng, 0, 5);
    const CorrMatrix uniform{Matrix(3, 4, 0.25)};
    double expect = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      double s = 0;
      for (double v : c.row(i)) s += v;
      expect += s / 4;
    }
    CHECK(loss_w(uniform, {c, {}}) == doctest::Approx(expect).epsilon(1e-14));

    Matrix one_hot(3, 4);
    one_hot(0, 2) = one_hot(1, 0) = one_hot(2, 2) = 1;
    CHECK(loss_w({one_hot}, {c, {}}) == doctest::Approx(c(0, 2) + c(1, 0) + c(2, 2)).epsilon(1e-14));
    std::vector<std::uint8_t> mask(12, 0);
    mask[2] = mask[4] = mask[10] = 1;
    CHECK(loss_q({one_hot, mask}, {c, {}}) == doctest::Approx(c(0, 2) + c(1, 0) + c(2, 2)).epsilon(1e-14));
  }

  TEST_CASE("hand-computed sparse loss") {
    const SparseCorr hat{Matrix{{0.7 / 1.3, 0.6 / 1.3}}, {1, 1}};
    CHECK(loss_q(hat, {Matrix{{2, 3}}, {}}) == doctest::Approx(3.2 / 1.3).epsilon(1e-14));
    CHECK(loss_q({Matrix(1, 2), {0, 0}}, {Matrix{{2, 3}}, {}}) == 0.0);
    CHECK(loss_w({Matrix(0, 5)}, {Matrix(0, 5), {}}) == 0.0);
    CHECK_THROWS_AS(loss_w({Matrix(1, 2)}, {Matrix(2, 1), {}}), ShapeError);
  }

  TEST_CASE("alpha = beta = 0 gives zero loss and gradient") {
    Fixture f = make_fixture(3, 6, 2);
    LossConfig cfg;
    cfg.alpha = cfg.beta = 0.0;
    cfg.detach_cost_in_lw = cfg.detach_corr_in_lq = cfg.detach_pred_in_probe = false;
    Gradients g = Gradients::zeros_like(f.probe, f.preds);
    const LossOutput out = total_loss_forward_backward(f.gts, f.preds, f.probe, f.probe_cfg, cfg, &g);
    CHECK(out.report.l_total == 0.0);
    CHECK(all_zero(g.probe));
    CHECK(g.preds.logits == Matrix(6, 4));
    CHECK(g.preds.boxes == Matrix(6, 4));
  }

  TEST_CASE("report fields") {
    Fixture f = make_fixture(3, 6, 3);
    const LossConfig cfg;
    const LossOutput out = total_loss_forward_backward(f.gts, f.preds, f.probe, f.probe_cfg, cfg, nullptr);
    double w = 0, q = 0;
    for (double v : out.report.per_gt_w) w += v;
    for (double v : out.report.per_gt_q) q += v;
    CHECK(out.report.l_w == doctest::Approx(w));
    CHECK(out.report.l_q == doctest::Approx(q));
    CHECK(out.report.l_total == doctest::Approx(out.report.l_w + out.report.l_q));
    // A row maximum always survives its own column threshold.
    for (std::size_t s : out.report.surviving) CHECK(s >= 1u);

    LossConfig mean = cfg;
    mean.per_gt_mean = true;
    const LossOutput avg = total_loss_forward_backward(f.gts, f.preds, f.probe, f.probe_cfg, mean, nullptr);
    CHECK(avg.report.l_total == doctest::Approx(out.report.l_total / 3));
  }

  TEST_CASE("default routing: probe sees only L_w, predictions only L_q") {
    Fixture f = make_fixture(4, 8, 5);
    LossConfig cfg;
    cfg.alpha = 0.7;
    cfg.beta = 1.9;
    Gradients g = Gradients::zeros_like(f.probe, f.preds);
    const LossOutput out = total_loss_forward_backward(f.gts, f.preds, f.probe, f.probe_cfg, cfg, &g);

    // Predictions: beta * A-hat pulled back through the cost only.
    PredictionGrad expect = PredictionGrad::zeros_like(f.preds);
    Matrix d_cost = out.scg.normalized.values;
    scale_inplace(d_cost, cfg.beta);
    broadcast_cost_backward(f.gts, f.preds, cfg.cost, cfg.cls_mode, d_cost, expect);
    CHECK(max_abs_diff(g.preds.logits, expect.logits) < 1e-14);
    CHECK(max_abs_diff(g.preds.boxes, expect.boxes) < 1e-14);

    // Probe: alpha * C pulled back through the attention only.
    ProbeCache cache;
    correspondence(f.gts, f.preds, f.probe, f.probe_cfg, &cache);
    GtProbeParams tape = f.probe.zeros_like();
    Matrix d_attn = out.cost.values;
    scale_inplace(d_attn, cfg.alpha);
    probe_backward(d_attn, cache, f.probe, tape);
    auto got = g.probe.tensors();
    auto want = tape.tensors();
    for (std::size_t t = 0; t < got.size(); ++t)
      for (std::size_t k = 0; k < got[t].data.size(); ++k) CHECK(std::abs(got[t].data[k] - want[t].data[k]) < 1e-14);
  }

  TEST_CASE("alpha does not reach the predictions and beta does not reach the probe") {
    Fixture f = make_fixture(3, 5, 6);
    LossConfig cfg;
    cfg.alpha = 0.0;
    Gradients g = Gradients::zeros_like(f.probe, f.preds);
    total_loss_forward_backward(f.gts, f.preds, f.probe, f.probe_cfg, cfg, &g);
    CHECK(all_zero(g.probe));

    cfg.alpha = 1.0;
    cfg.beta = 0.0;
    Gradients h = Gradients::zeros_like(f.probe, f.preds);
    total_loss_forward_backward(f.gts, f.preds, f.probe, f.probe_cfg, cfg, &h);
    CHECK(h.preds.logits == Matrix(5, 4));
    CHECK(h.preds.boxes == Matrix(5, 4));
  }

  TEST_CASE("clearing the detach flags opens the extra paths") {
    Fixture f = make_fixture(3, 5, 7);
    LossConfig cfg;
    cfg.beta = 0.0;
    cfg.detach_cost_in_lw = false;
    Gradients g = Gradients::zeros_like(f.probe, f.preds);
    total_loss_forward_backward(f.gts, f.preds, f.probe, f.probe_cfg, cfg, &g);
    CHECK(g.preds.boxes != Matrix(5, 4));

    LossConfig q;
    q.alpha = 0.0;
    q.scg.rho = 0.1;
    q.detach_corr_in_lq = false;
    Gradients h = Gradients::zeros_like(f.probe, f.preds);
    total_loss_forward_backward(f.gts, f.preds, f.probe, f.probe_cfg, q, &h);
    CHECK_FALSE(all_zero(h.probe));
  }

  TEST_CASE("empty scene") {
    Fixture f = make_fixture(0, 5, 8);
    Gradients g = Gradients::zeros_like(f.probe, f.preds);
    const LossOutput out = total_loss_forward_backward(f.gts, f.preds, f.probe, f.probe_cfg, {}, &g);
    CHECK(out.report.l_total == 0.0);
    CHECK(all_zero(g.probe));
  }

  TEST_CASE("pipeline check passes and catches a corrupted entry") {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      Fixture f = make_fixture(1 + seed, 6, 10 + seed);
      LossConfig cfg;
      cfg.alpha = 0.8;
      cfg.beta = 1.3;
      const PipelineCheckResult r = pipeline_gradcheck(f.gts, f.preds, f.probe, f.probe_cfg, cfg);
      CHECK_MESSAGE(r.passed(1e-4), r.overall().max_rel_error);
      PipelineCheckOptions bad;
      bad.corrupt_index = seed * 7;
      CHECK_FALSE(pipeline_gradcheck(f.gts, f.preds, f.probe, f.probe_cfg, cfg, bad).passed(1e-4));
    }
  }

  TEST_CASE("invalid config") {
    LossConfig cfg;
    cfg.alpha = -1;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
  }
}
