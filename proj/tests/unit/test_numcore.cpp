#include <doctest.h>

#include <cmath>
#include <vector>

#include "hialign/errors.hpp"
#include "hialign/gradcheck.hpp"
#include "hialign/matrix.hpp"
#include "hialign/rng.hpp"
#include "oracles.hpp"

using namespace hialign;

TEST_CASE("matmul examples") {
  const Matrix a{{1, 2}, {3, 4}};
  const Matrix b{{5, 6}, {7, 8}};
  CHECK(matmul(a, b) == Matrix{{19, 22}, {43, 50}});
  CHECK(matmul(Matrix::identity(2), a) == a);
  CHECK(matmul(a, Matrix::zeros(2, 2)) == Matrix::zeros(2, 2));
  CHECK(matmul_tn(a, b) == matmul(transpose(a), b));
  CHECK(matmul_nt(a, b) == matmul(a, transpose(b)));
  CHECK_THROWS_AS(matmul(a, Matrix(3, 2)), ShapeError);
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST_CASE("matmul is associative up to round-off") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = oracle::random_matrix(3, 4, rng);
    const Matrix b = oracle::random_matrix(4, 2, rng);
    const Matrix c = oracle::random_matrix(2, 5, rng);
    const Matrix lhs = matmul(matmul(a, b), c);
    const Matrix rhs = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < lhs.size(); ++i) CHECK(lhs.values()[i] == doctest::Approx(rhs.values()[i]).epsilon(1e-12));
  }
}

TEST_CASE("l2_normalize") {
  CHECK(l2_normalize(Matrix{{1, 0, 0}}) == Matrix{{1, 0, 0}});
  const Matrix n = l2_normalize(Matrix{{3, 4}});
  CHECK(n(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(n(0, 1) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK_THROWS_AS(l2_normalize(Matrix{{0, 0}}), DegenerateInputError);

  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix v = oracle::random_matrix(1, 5, rng);
    const Matrix once = l2_normalize(v);
    const Matrix twice = l2_normalize(once);
    CHECK(norm2(once.row(0)) == doctest::Approx(1.0).epsilon(1e-15));
    for (std::size_t i = 0; i < 5; ++i) CHECK(twice(0, i) == doctest::Approx(once(0, i)).epsilon(1e-15));
  }
}

TEST_CASE("l2_normalize_rows names the degenerate row") {
  try {
    l2_normalize_rows(Matrix{{1, 0}, {0, 0}});
    FAIL("expected DegenerateInputError");
  } catch (const DegenerateInputError& e) {
    CHECK(std::string(e.what()).find("row 1") != std::string::npos);
  }
}

TEST_CASE("rng determinism and independence") {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs = differs || x != c.next_u64();
  }
  CHECK(differs);
  CHECK(Rng(5).derive("x").seed() == derive_seed(5, "x"));
  CHECK(derive_seed(5, "x") != derive_seed(5, "y"));
  CHECK(Rng(5).split(0).seed() != Rng(5).split(1).seed());
}

TEST_CASE("rng ranges") {
  Rng rng(9);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    ++counts[rng.uniform_index(7)];
  }
  for (int c : counts) CHECK(c > 800);
  double sum = 0, sq = 0;
  for (int i = 0; i < 20000; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / 20000) < 0.05);
  CHECK(std::abs(sq / 20000 - 1.0) < 0.05);
}

TEST_CASE("finite differences") {
  const Matrix x{{3.0}};
  CHECK(finite_diff_grad([](const Matrix&) { return 2.5; }, x)(0, 0) == 0.0);
  CHECK(finite_diff_grad([](const Matrix& m) { return m(0, 0) * m(0, 0); }, x, 1e-5)(0, 0) ==
        doctest::Approx(6.0).epsilon(1e-6 / 6.0));
  const Matrix ones = finite_diff_grad(
      [](const Matrix& m) {
        double s = 0;
        for (double v : m.values()) s += v;
        return s;
      },
      Matrix{{1, 2}, {3, 4}});
  for (double g : ones.values()) CHECK(g == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS_AS(finite_diff_grad([](const Matrix& m) { return std::log(m(0, 0)); }, Matrix{{0.0}}), NumericError);
}

TEST_CASE("max_relative_error") {
  CHECK(max_relative_error(Matrix{{1.0, 0.0}}, Matrix{{1.0, 0.0}}) == 0.0);
  CHECK(max_relative_error(Matrix{{1.0}}, Matrix{{1.1}}) == doctest::Approx(0.1 / 1.1));
}
