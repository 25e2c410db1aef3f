#include <doctest.h>

#include <cmath>
#include <random>

#include "matchfree/cost.hpp"
#include "matchfree/errors.hpp"
#include "test_util.hpp"

using namespace matchfree;

namespace {

struct Instance {
  GroundTruthSet gts;
  PredictionSet preds;
};

Instance random_instance(std::size_t m, std::size_t n, std::size_t k, std::mt19937_64& rng) {
  Instance in;
  for (std::size_t i = 0; i < m; ++i) {
    in.gts.labels.push_back(static_cast<int>(rng() % k));
    in.gts.boxes.push_back(oracle::random_box(rng));
  }
  in.preds.logits = oracle::random_matrix(n, k, rng, -3, 3);
  for (std::size_t j = 0; j < n; ++j) in.preds.boxes.push_back(oracle::random_box(rng));
  return in;
}

}  // namespace

TEST_SUITE("cost") {
  TEST_CASE("default weights") {
    const CostWeights w;
    CHECK(w.cls == 2.0);
    CHECK(w.l1 == 5.0);
    CHECK(w.giou == 2.0);
  }

  TEST_CASE("uniform logits cost ln K") {
    const std::vector<double> logits(4, 0.7);
    CHECK(classification_cost(logits, 2, ClassCostMode::kNll) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  }

  TEST_CASE("probability clamp bounds the cost") {
    const std::vector<double> logits{-1e4, 0, 0};
    CHECK(classification_cost(logits, 0, ClassCostMode::kNll) <= -std::log(1e-8) + 1e-9);
    CHECK(classification_cost_grad(logits, 0, ClassCostMode::kNll) == std::vector<double>{0, 0, 0});
  }

  TEST_CASE("class id out of range") {
    const std::vector<double> logits{0, 0};
    CHECK_THROWS_AS(classification_cost(logits, 2, ClassCostMode::kNll), ValidationError);
    CHECK_THROWS_AS(classification_cost(logits, -1, ClassCostMode::kFocal), ValidationError);
  }

  TEST_CASE("classification gradients match finite differences") {
    std::mt19937_64 rng(2);
    for (auto mode : {ClassCostMode::kNll, ClassCostMode::kFocal}) {
      for (int t = 0; t < 20; ++t) {
        Matrix row = oracle::random_matrix(1, 5, rng, -3, 3);
        const int c = static_cast<int>(rng() % 5);
        const auto an = classification_cost_grad(row.row(0), c, mode);
        for (std::size_t k = 0; k < 5; ++k) {
          auto f = [&] { return classification_cost(row.row(0), c, mode); };
          CHECK(oracle::rel_err(an[k], oracle::central_diff(f, row(0, k))) < 1e-6);
        }
      }
    }
  }

  TEST_CASE("weighted sum of the three terms") {
    // per-term values 1, 0.1, 0.5 under weights (2, 5, 2)
    CostWeights w;
    CHECK(w.cls * 1.0 + w.l1 * 0.1 + w.giou * 0.5 == doctest::Approx(3.5));

    GroundTruthSet g{{0}, {{0.5, 0.5, 0.2, 0.2}}};
    PredictionSet p{Matrix{{0.0, 0.0}}, {{0.6, 0.5, 0.2, 0.2}}};
    const CostMatrix c = broadcast_cost(g, p, w, ClassCostMode::kNll, true);
    REQUIRE(c.components);
    const double cls = std::log(2.0), l1 = 0.1, gl = 1.0 - oracle::giou(p.boxes[0], g.boxes[0]);
    CHECK(c.components->cls(0, 0) == doctest::Approx(cls).epsilon(1e-12));
    CHECK(c.components->l1(0, 0) == doctest::Approx(l1).epsilon(1e-12));
    CHECK(c.components->giou(0, 0) == doctest::Approx(gl).epsilon(1e-12));
    CHECK(c.values(0, 0) == doctest::Approx(2 * cls + 5 * l1 + 2 * gl).epsilon(1e-12));
  }

  TEST_CASE("broadcast cost matches the per-pair oracle") {
    std::mt19937_64 rng(9);
    for (auto mode : {ClassCostMode::kNll, ClassCostMode::kFocal}) {
      for (int t = 0; t < 30; ++t) {
        const Instance in = random_instance(1 + rng() % 6, 1 + rng() % 12, 4, rng);
        const CostWeights w{1.5, 3.0, 0.5};
        const CostMatrix c = broadcast_cost(in.gts, in.preds, w, mode);
        CHECK_FALSE(c.components.has_value());
        for (std::size_t i = 0; i < c.num_gts(); ++i)
          for (std::size_t j = 0; j < c.num_queries(); ++j)
            CHECK(std::abs(c.values(i, j) -
                           oracle::pair_cost(in.gts, in.preds, i, j, w, mode == ClassCostMode::kFocal)) < 1e-10);
      }
    }
  }

  TEST_CASE("empty scene gives a 0 x N cost") {
    std::mt19937_64 rng(1);
    const Instance in = random_instance(0, 7, 3, rng);
    const CostMatrix c = broadcast_cost(in.gts, in.preds, {});
    CHECK(c.num_gts() == 0);
    CHECK(c.num_queries() == 7);
  }

  TEST_CASE("invalid inputs") {
    std::mt19937_64 rng(1);
    Instance in = random_instance(2, 3, 3, rng);
    in.gts.labels[1] = 3;
    CHECK_THROWS_AS(broadcast_cost(in.gts, in.preds, {}), ValidationError);
    CHECK_THROWS_AS(broadcast_cost({}, PredictionSet{Matrix(0, 3), {}}, {}), ValidationError);
    CHECK_THROWS_AS(CostWeights({-1, 5, 2}).validate(), ValidationError);
  }

  TEST_CASE("backward: zero upstream gives zero gradient") {
    std::mt19937_64 rng(4);
    const Instance in = random_instance(3, 5, 4, rng);
    PredictionGrad g = PredictionGrad::zeros_like(in.preds);
    broadcast_cost_backward(in.gts, in.preds, {}, ClassCostMode::kNll, Matrix(3, 5), g);
    CHECK(g.logits == Matrix(5, 4));
    CHECK(g.boxes == Matrix(5, 4));
  }

  TEST_CASE("backward matches finite differences of a weighted cost sum") {
    std::mt19937_64 rng(31);
    for (auto mode : {ClassCostMode::kNll, ClassCostMode::kFocal}) {
      for (int t = 0; t < 10; ++t) {
        Instance in = random_instance(1 + rng() % 4, 1 + rng() % 6, 3, rng);
        const Matrix up = oracle::random_matrix(in.gts.size(), in.preds.size(), rng);
        auto f = [&] {
          const Matrix c = broadcast_cost(in.gts, in.preds, {}, mode).values;
          double s = 0;
          for (std::size_t i = 0; i < c.size(); ++i) s += c.values()[i] * up.values()[i];
          return s;
        };
        PredictionGrad g = PredictionGrad::zeros_like(in.preds);
        broadcast_cost_backward(in.gts, in.preds, {}, mode, up, g);
        for (std::size_t i = 0; i < in.preds.logits.size(); ++i) {
          const double num = oracle::central_diff(f, in.preds.logits.values()[i]);
          CHECK(oracle::rel_err(g.logits.values()[i], num) < 1e-5);
        }
        for (std::size_t j = 0; j < in.preds.size(); ++j) {
          Box& b = in.preds.boxes[j];
          double* fields[4] = {&b.cx, &b.cy, &b.w, &b.h};
          for (std::size_t k = 0; k < 4; ++k) {
            const double num = oracle::central_diff(f, *fields[k]);
            CHECK(oracle::rel_err(g.boxes(j, k), num) < 1e-5);
          }
        }
      }
    }
  }

  TEST_CASE("backward rejects a mis-shaped upstream") {
    std::mt19937_64 rng(4);
    const Instance in = random_instance(3, 5, 4, rng);
    PredictionGrad g = PredictionGrad::zeros_like(in.preds);
    CHECK_THROWS_AS(broadcast_cost_backward(in.gts, in.preds, {}, ClassCostMode::kNll, Matrix(5, 3), g),
                    ShapeError);
  }
}
