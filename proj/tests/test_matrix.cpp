#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "test_util.hpp"
#include "xbarvit/matrix.hpp"

using namespace xbarvit;
using xbarvit::testing::Gen;

namespace {

Matrix triple_loop(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

}  // namespace

TEST_SUITE("core-math") {

TEST_CASE("matmul hand cases") {
  const Matrix b{{1.5, -2.0, 3.0}, {4.0, 0.25, -1.0}};
  CHECK(matmul(Matrix{{1, 0}, {0, 1}}, b) == b);
  CHECK(matmul(Matrix{{1, 2}, {3, 4}}, Matrix{{5}, {6}}) == Matrix{{17}, {39}});
  CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), std::invalid_argument);
}

TEST_CASE("matmul equals triple-loop oracle bitwise") {
  Gen gen(11);
  const Matrix a79 = gen.matrix(7, 9, -1, 1);
  const Matrix b93 = gen.matrix(9, 3, -1, 1);
  CHECK(matmul(a79, b93) == triple_loop(a79, b93));
  for (int trial = 0; trial < 50; ++trial) {
    const auto n = static_cast<std::size_t>(gen.integer(1, 20));
    const auto k = static_cast<std::size_t>(gen.integer(1, 20));
    const auto m = static_cast<std::size_t>(gen.integer(1, 20));
    const Matrix a = gen.matrix(n, k, -3, 3);
    const Matrix b = gen.matrix(k, m, -3, 3);
    CHECK(matmul(a, b) == triple_loop(a, b));
  }
}

TEST_CASE("softmax examples") {
  const Matrix s = softmax_rows(Matrix{{0, 0, 0}, {1000, 0, 0}, {1, 2, 3}});
  for (int j = 0; j < 3; ++j) CHECK(s(0, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(std::abs(s(1, 0) - 1.0) < 1e-12);
  CHECK(s(1, 1) < 1e-12);
  // exp-normalize evaluated at 30 significant digits
  CHECK(std::abs(s(2, 0) - 0.090030573170380457998) < 1e-15);
  CHECK(std::abs(s(2, 1) - 0.24472847105479765247) < 1e-15);
  CHECK(std::abs(s(2, 2) - 0.66524095577482188953) < 1e-15);
}

TEST_CASE("softmax rows sum to one and ignore row shifts") {
  Gen gen(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto cols = static_cast<std::size_t>(gen.integer(1, 40));
    Matrix m = gen.matrix(3, cols, -50, 50);
    const Matrix s = softmax_rows(m);
    for (std::size_t r = 0; r < 3; ++r) {
      double sum = 0.0;
      for (double v : s.row(r)) sum += v;
      CHECK(std::abs(sum - 1.0) < 1e-6);
    }
    Matrix shifted = m;
    for (std::size_t r = 0; r < 3; ++r)
      for (double& v : shifted.row(r)) v += (static_cast<double>(r) + 1.0) * 64.0;
    CHECK(xbarvit::testing::max_abs_diff(softmax_rows(shifted), s) < 1e-12);
  }
}

TEST_CASE("layernorm examples") {
  const Matrix ones(1, 4, 1.0);
  const Matrix zeros(1, 4, 0.0);
  const Matrix flat = layernorm(Matrix(1, 4, 3.5), ones, zeros);
  for (double v : flat.values()) CHECK(v == 0.0);
  const Matrix unit = layernorm(Matrix{{1, -1}}, Matrix(1, 2, 1.0), Matrix(1, 2, 0.0), 1e-14);
  CHECK(xbarvit::testing::max_abs_diff(unit, Matrix{{1, -1}}) < 1e-12);
  CHECK_THROWS(layernorm(Matrix{{1, -1}}, Matrix(1, 2, 1.0), Matrix(1, 2, 0.0), 0.0));
  CHECK_THROWS(layernorm(Matrix(1, 3), ones, zeros));
}

TEST_CASE("layernorm moments against a long double oracle") {
  Gen gen(8);
  for (int trial = 0; trial < 50; ++trial) {
    const auto cols = static_cast<std::size_t>(gen.integer(2, 64));
    const Matrix x = gen.matrix(2, cols, -10, 10);
    const Matrix y = layernorm(x, Matrix(1, cols, 1.0), Matrix(1, cols, 0.0), 1e-14);
    for (std::size_t r = 0; r < 2; ++r) {
      long double mean = 0, var = 0;
      for (double v : y.row(r)) mean += v;
      mean /= cols;
      for (double v : y.row(r)) var += (v - mean) * (v - mean);
      var /= cols;
      CHECK(std::abs(static_cast<double>(mean)) < 1e-5);
      CHECK(std::abs(static_cast<double>(var) - 1.0) < 1e-5);
    }
  }
  const Matrix g{{2.0, 3.0}};
  const Matrix b{{0.5, -1.0}};
  const Matrix y = layernorm(Matrix{{1, -1}}, g, b, 1e-14);
  CHECK(xbarvit::testing::max_abs_diff(y, Matrix{{2.5, -4.0}}) < 1e-12);
}

TEST_CASE("gelu") {
  const Matrix y = gelu(Matrix{{0.0, 1.0, -0.5, 2.0, 30.0, -30.0}});
  CHECK(y(0, 0) == 0.0);
  // x * Phi(x) evaluated at 30 significant digits
  CHECK(std::abs(y(0, 1) - 0.84134474606854294859) < 1e-15);
  CHECK(std::abs(y(0, 2) - -0.15426876936299344818) < 1e-15);
  CHECK(std::abs(y(0, 3) - 1.9544997361036415856) < 1e-14);
  CHECK(y(0, 4) == doctest::Approx(30.0));
  CHECK(std::abs(y(0, 5)) < 1e-100);
}

TEST_CASE("frobenius") {
  CHECK(frobenius(Matrix{{3, 4}}) == 5.0);
  CHECK(frobenius(Matrix(2, 2)) == 0.0);
}

TEST_CASE("quantize examples") {
  const QuantSpec q{8, 0.0, 1.0};
  CHECK(quantize(Matrix{{0.0}}, q)(0, 0) == 0.0);
  CHECK(quantize(Matrix{{7.0}}, q)(0, 0) == 1.0);
  CHECK(quantize(Matrix{{-7.0}}, q)(0, 0) == 0.0);
  // 0.5 sits midway between codes 127 and 128; either is a nearest level.
  double best = 1.0;
  for (int c = 0; c < 256; ++c) best = std::min(best, std::abs(c / 255.0 - 0.5));
  const double got = quantize(Matrix{{0.5}}, q)(0, 0);
  CHECK(std::abs(std::abs(got - 0.5) - best) < 1e-15);
  CHECK(quantize(Matrix{{0.3}}, q)(0, 0) == doctest::Approx(77.0 / 255.0).epsilon(1e-15));
  CHECK_THROWS(QuantSpec{0, 0.0, 1.0}.validate());
  CHECK_THROWS(QuantSpec{8, 1.0, 1.0}.validate());
}

TEST_CASE("quantize is idempotent and within half a step") {
  Gen gen(3);
  for (int trial = 0; trial < 200; ++trial) {
    const double lo = gen.uniform(-5, 0);
    const double hi = lo + gen.uniform(0.01, 10);
    const QuantSpec q{gen.integer(1, 12), lo, hi};
    const Matrix x = gen.matrix(4, 4, lo - 1, hi + 1);
    const Matrix y = quantize(x, q);
    CHECK(quantize(y, q) == y);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double clipped = std::clamp(x.values()[i], lo, hi);
      CHECK(std::abs(clipped - y.values()[i]) <= q.step() / 2 * (1 + 1e-9));
    }
  }
}

TEST_CASE("observed quantization covers the tensor range") {
  Gen gen(4);
  const Matrix x = gen.matrix(5, 6, -2, 3);
  const QuantizedTensor qt = quantize_observed(x, 8);
  CHECK(qt.offset == x.min_value());
  CHECK(*std::min_element(qt.codes.begin(), qt.codes.end()) == 0);
  CHECK(*std::max_element(qt.codes.begin(), qt.codes.end()) == 255);
  CHECK(xbarvit::testing::max_abs_diff(qt.dequantized(), x) <= qt.step / 2 * (1 + 1e-9));

  const QuantizedTensor flat = quantize_observed(Matrix(2, 2, 1.25), 8);
  CHECK(flat.offset == 1.25);
  for (auto c : flat.codes) CHECK(c == 0);
  CHECK(flat.dequantized() == Matrix(2, 2, 1.25));
}

}  // TEST_SUITE
