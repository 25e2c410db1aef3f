#include <doctest.h>

#include <cmath>
#include <random>

#include "matchfree/errors.hpp"
#include "matchfree/scg.hpp"
#include "test_util.hpp"

using namespace matchfree;

namespace {

ScgConfig with(double rho, NormMode norm) {
  ScgConfig c;
  c.rho = rho;
  c.norm = norm;
  return c;
}

}  // namespace

TEST_SUITE("scg") {
  TEST_CASE("defaults") {
    const ScgConfig c;
    CHECK(c.rho == 0.5);
    CHECK(c.norm == NormMode::kSum1);
  }

  TEST_CASE("row max filter") {
    CHECK(row_max_filter(Matrix{{0.7, 0.2, 0.1}}) == Matrix{{0.7, 0, 0}});
    CHECK(row_max_filter(Matrix{{0.5, 0.5}}) == Matrix{{0.5, 0.5}});
  }

  TEST_CASE("column max") {
    CHECK(col_max(Matrix{{0.7, 0, 0}, {0, 0.6, 0}}) == std::vector<double>{0.7, 0.6, 0});
    CHECK(col_max(Matrix(0, 3)) == std::vector<double>{0, 0, 0});
    const Matrix single = row_max_filter(Matrix{{0.1, 0.6, 0.3}});
    CHECK(col_max(single) == std::vector<double>{0, 0.6, 0});
  }

  TEST_CASE("hand trace of the selection rule") {
    const Matrix a{{0.7, 0.2, 0.1}, {0.3, 0.6, 0.1}};
    const ScgTrace t = sparse_correspondence(a, with(0.5, NormMode::kNone));
    CHECK(t.a_max == std::vector<double>{0.7, 0.6, 0});
    CHECK(t.tau[0] == doctest::Approx(0.35));
    CHECK(t.tau[1] == doctest::Approx(0.3));
    CHECK(t.tau[2] == 0.0);
    CHECK(t.sparse.values == Matrix{{0.7, 0, 0}, {0, 0.6, 0}});
    CHECK(t.normalized.values == t.sparse.values);
    CHECK(t.sparse.row_support(0) == 1);
  }

  TEST_CASE("rho close to one keeps only column maxima, ties included") {
    const Matrix a{{0.5, 0.3, 0.2}, {0.45, 0.1, 0.45}, {0.2, 0.7, 0.1}};
    const ScgTrace t = sparse_correspondence(a, with(0.999999, NormMode::kNone));
    CHECK(t.sparse.values == Matrix{{0.5, 0, 0}, {0, 0, 0.45}, {0, 0.7, 0}});
  }

  TEST_CASE("normalization modes") {
    SparseCorr s{Matrix{{0.7, 0.6}, {0.6, 0}, {0.8, 0.4}, {0, 0}}, {1, 1, 1, 0, 1, 1, 0, 0}};
    const SparseCorr sum = normalize(s, with(0.5, NormMode::kSum1));
    CHECK(sum.values(0, 0) == doctest::Approx(0.7 / 1.3).epsilon(1e-7));
    CHECK(sum.values(0, 1) == doctest::Approx(0.6 / 1.3).epsilon(1e-7));
    CHECK(sum.values(1, 0) == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(sum.values(3, 0) == 0.0);
    const SparseCorr mx = normalize(s, with(0.5, NormMode::kMax));
    CHECK(mx.values(2, 0) == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(mx.values(2, 1) == doctest::Approx(0.5).epsilon(1e-7));
    const SparseCorr none = normalize(s, with(0.5, NormMode::kNone));
    CHECK(none.values == s.values);
  }

  TEST_CASE("matches the brute-force trace") {
    std::mt19937_64 rng(12);
    for (int t = 0; t < 200; ++t) {
      const std::size_t m = 1 + rng() % 6, n = 1 + rng() % 8;
      const Matrix a = oracle::softmax_rows(oracle::random_matrix(m, n, rng, -3, 3));
      for (auto norm : {NormMode::kNone, NormMode::kSum1, NormMode::kMax}) {
        const double rho = 0.1 + 0.8 * std::uniform_real_distribution<double>()(rng);
        const ScgTrace got = sparse_correspondence(a, with(rho, norm));
        const oracle::ScgRef ref = oracle::scg(a, rho, norm);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            CHECK(got.sparse.kept(i, j) == ref.keep[i][j]);
            CHECK(std::abs(got.normalized.values(i, j) - ref.normalized(i, j)) < 1e-15);
          }
      }
    }
  }

  TEST_CASE("invalid config") {
    CHECK_THROWS_AS(with(0.0, NormMode::kSum1).validate(), ValidationError);
    CHECK_THROWS_AS(with(1.0, NormMode::kSum1).validate(), ValidationError);
    ScgConfig c;
    c.eps = 0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    CHECK_THROWS_AS(sparsify(Matrix(2, 3), {1, 1}, ScgConfig{}), ShapeError);
  }

  TEST_CASE("backward matches finite differences with a frozen mask") {
    std::mt19937_64 rng(8);
    for (auto norm : {NormMode::kNone, NormMode::kSum1, NormMode::kMax}) {
      for (int t = 0; t < 20; ++t) {
        Matrix a = oracle::softmax_rows(oracle::random_matrix(4, 6, rng, -2, 2));
        const ScgConfig cfg = with(0.3, norm);
        const ScgTrace tr = sparse_correspondence(a, cfg);
        const Matrix up = oracle::random_matrix(4, 6, rng);
        // Re-apply the fixed mask and normalization to perturbed entries.
        auto f = [&] {
          double s = 0;
          for (std::size_t i = 0; i < 4; ++i) {
            double sum = 0, mx = 0;
            for (std::size_t j = 0; j < 6; ++j)
              if (tr.sparse.kept(i, j)) {
                sum += a(i, j);
                mx = std::max(mx, a(i, j));
              }
            for (std::size_t j = 0; j < 6; ++j) {
              if (!tr.sparse.kept(i, j)) continue;
              const double d = norm == NormMode::kNone ? 1.0 : norm == NormMode::kSum1 ? sum + cfg.eps : mx + cfg.eps;
              s += up(i, j) * a(i, j) / d;
            }
          }
          return s;
        };
        const Matrix g = sparse_correspondence_backward(tr, cfg, up);
        for (std::size_t k = 0; k < a.size(); ++k) {
          const double num = oracle::central_diff(f, a.values()[k], 1e-7);
          CHECK(oracle::rel_err(g.values()[k], num) < 1e-5);
        }
      }
    }
  }
}
