#include <catch2/catch.hpp>

#include "specdyn/linalg.hpp"
#include "specdyn/rng.hpp"

using namespace specdyn;

TEST_CASE("matrix basics") {
  Mat a(2, 3);
  a(0, 0) = 1; a(0, 1) = 2; a(0, 2) = 3;
  a(1, 0) = 4; a(1, 1) = 5; a(1, 2) = 6;

  Mat at = transpose(a);
  REQUIRE(at.rows() == 3);
  REQUIRE(at(2, 1) == 6.0);

  Vec x = {1.0, 0.0, -1.0};
  Vec y = matvec(a, x);
  REQUIRE(y[0] == Approx(-2.0));
  REQUIRE(y[1] == Approx(-2.0));

  Vec yt = tmatvec(a, {1.0, 1.0});
  REQUIRE(yt[0] == Approx(5.0));
  REQUIRE(yt[2] == Approx(9.0));

  Mat p = matmul(a, at);
  REQUIRE(p(0, 0) == Approx(14.0));
  REQUIRE(p(0, 1) == Approx(32.0));
  REQUIRE(p(1, 1) == Approx(77.0));

  REQUIRE_THROWS_AS(matvec(a, {1.0}), DimensionMismatch);
  REQUIRE_THROWS_AS(matmul(a, a), DimensionMismatch);
}

TEST_CASE("eigh diagonalizes random symmetric matrices") {
  SplitMix64 rng(991);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + rng.next_u64() % 12;
    Mat a = rng.gaussian_mat(n, n);
    symmetrize(a);
    const SymmetricEigen e = eigh(a);

    const double scale = std::max(1.0, max_abs(a));
    for (std::size_t j = 0; j < n; ++j) {
      // residual A v = lambda v
      for (std::size_t i = 0; i < n; ++i) {
        double av = 0.0;
        for (std::size_t k = 0; k < n; ++k) av += a(i, k) * e.vectors(k, j);
        REQUIRE(av == Approx(e.values[j] * e.vectors(i, j)).margin(1e-10 * scale));
      }
      if (j + 1 < n) REQUIRE(e.values[j] >= e.values[j + 1]);
    }
    // orthonormal eigenvectors
    Mat vtv = matmul(transpose(e.vectors), e.vectors);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        REQUIRE(vtv(i, j) == Approx(i == j ? 1.0 : 0.0).margin(1e-12));
  }
}

TEST_CASE("eigh warm start matches the cold solve") {
  SplitMix64 rng(313);
  Mat a = rng.gaussian_mat(8, 8);
  symmetrize(a);
  SymmetricEigen cold = eigh(a);
  // perturb slightly and warm start from the previous basis
  Mat b = a;
  b(0, 0) += 1e-3;
  b(3, 4) += 1e-4;
  b(4, 3) += 1e-4;
  SymmetricEigen warm = eigh(b, &cold.vectors);
  SymmetricEigen fresh = eigh(b);
  for (std::size_t i = 0; i < 8; ++i)
    REQUIRE(warm.values[i] == Approx(fresh.values[i]).margin(1e-11));
}

TEST_CASE("spectral norm agrees with a direct Gram eigenvalue") {
  SplitMix64 rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t r = 1 + rng.next_u64() % 6;
    const std::size_t c = 1 + rng.next_u64() % 9;
    Mat m = rng.gaussian_mat(r, c);
    // oracle: largest eigenvalue of M^T M
    Mat g = matmul(transpose(m), m);
    const double expect = std::sqrt(std::max(0.0, eigh(g).values.front()));
    REQUIRE(spectral_norm(m) == Approx(expect).margin(1e-9 * std::max(1.0, expect)));
  }
}

TEST_CASE("identity matrix eigenvalues are all one") {
  const SymmetricEigen e = eigh(Mat::identity(5));
  for (double v : e.values) REQUIRE(v == Approx(1.0).margin(1e-14));
}
