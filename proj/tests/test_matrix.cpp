#include <doctest.h>

#include <cmath>
#include <random>

#include "matchfree/errors.hpp"
#include "matchfree/matrix.hpp"
#include "test_util.hpp"

using namespace matchfree;

TEST_SUITE("matrix") {
  TEST_CASE("identity times M is M") {
    const Matrix eye{{1, 0}, {0, 1}};
    const Matrix m{{1.5, -2, 3}, {4, 5, 6.25}};
    CHECK(matmul(eye, m) == m);
  }

  TEST_CASE("hand product") {
    const Matrix a{{1, 2}, {3, 4}};
    const Matrix b{{1}, {1}};
    CHECK(matmul(a, b) == Matrix{{3}, {7}});
  }

  TEST_CASE("products agree with the naive triple loop") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 20; ++t) {
      const std::size_t r = 1 + rng() % 6, k = 1 + rng() % 6, c = 1 + rng() % 6;
      const Matrix a = oracle::random_matrix(r, k, rng);
      const Matrix b = oracle::random_matrix(k, c, rng);
      const Matrix ref = oracle::naive_matmul(a, b);
      const Matrix got = matmul(a, b);
      const Matrix got_bt = matmul_bt(a, transpose(b));
      const Matrix got_at = matmul_at(transpose(a), b);
      for (std::size_t i = 0; i < ref.size(); ++i) {
        CHECK(got.values()[i] == doctest::Approx(ref.values()[i]).epsilon(1e-12));
        CHECK(got_bt.values()[i] == doctest::Approx(ref.values()[i]).epsilon(1e-12));
        CHECK(got_at.values()[i] == doctest::Approx(ref.values()[i]).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("shape mismatch throws") {
    CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
    Matrix a(2, 2);
    CHECK_THROWS_AS(add_inplace(a, Matrix(3, 2)), ShapeError);
  }

  TEST_CASE("zero-sized operands") {
    const Matrix out = matmul(Matrix(0, 3), Matrix(3, 4));
    CHECK(out.rows() == 0);
    CHECK(out.cols() == 4);
    const Matrix inner = matmul(Matrix(2, 0), Matrix(0, 3));
    CHECK(inner == Matrix(2, 3, 0.0));
  }

  TEST_CASE("softmax closed forms") {
    const Matrix s = softmax_rows(Matrix{{0, 0, 0}, {std::log(2.0), 0, -1e300}});
    CHECK(s(0, 0) == doctest::Approx(1.0 / 3));
    CHECK(s(0, 2) == doctest::Approx(1.0 / 3));
    CHECK(s(1, 0) == doctest::Approx(2.0 / 3).epsilon(1e-14));
    CHECK(s(1, 1) == doctest::Approx(1.0 / 3).epsilon(1e-14));
    CHECK(s(1, 2) == 0.0);
  }

  TEST_CASE("softmax is stable for large logits") {
    const Matrix s = softmax_rows(Matrix{{1000, 0}});
    CHECK(s.all_finite());
    CHECK(s(0, 0) == doctest::Approx(1.0));
    CHECK(s(0, 1) < 1e-300);
  }

  TEST_CASE("softmax rejects empty rows") { CHECK_THROWS_AS(softmax_rows(Matrix(2, 0)), ShapeError); }

  TEST_CASE("softmax backward matches finite differences") {
    std::mt19937_64 rng(11);
    Matrix x = oracle::random_matrix(3, 5, rng, -2, 2);
    const Matrix w = oracle::random_matrix(3, 5, rng);
    auto f = [&] {
      const Matrix y = softmax_rows(x);
      double s = 0;
      for (std::size_t i = 0; i < y.size(); ++i) s += y.values()[i] * w.values()[i];
      return s;
    };
    const Matrix g = softmax_rows_backward(softmax_rows(x), w);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double num = oracle::central_diff(f, x.values()[i]);
      CHECK(oracle::rel_err(g.values()[i], num) < 1e-7);
    }
  }

  TEST_CASE("softmax backward of a constant row gradient is zero") {
    const Matrix y = softmax_rows(Matrix{{0.3, -1, 2}});
    const Matrix g = softmax_rows_backward(y, Matrix{{4, 4, 4}});
    for (double v : g.values()) CHECK(std::abs(v) < 1e-15);
  }
}
