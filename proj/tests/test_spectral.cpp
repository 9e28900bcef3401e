#include <catch2/catch.hpp>

#include "specdyn/rng.hpp"
#include "specdyn/spectral.hpp"

using namespace specdyn;

namespace {

Mat reconstruct(const SpectralDecomposition& dec) {
  Mat sig(dec.n(), dec.d());
  for (std::size_t r = 0; r < dec.singular_values.size(); ++r)
    sig(r, r) = dec.singular_values[r];
  return matmul(dec.left_basis, matmul(sig, transpose(dec.right_basis)));
}

double orthogonality_error(const Mat& q) {
  Mat g = matmul(transpose(q), q);
  double err = 0.0;
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j)
      err = std::max(err, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
  return err;
}

Mat random_instance(SplitMix64& rng, std::size_t max_n, std::size_t max_d,
                    bool force_deficient) {
  const std::size_t n = 1 + rng.next_u64() % max_n;
  const std::size_t d = 1 + rng.next_u64() % max_d;
  if (force_deficient && std::min(n, d) > 1) {
    const std::size_t r = 1 + rng.next_u64() % (std::min(n, d) - 1);
    return matmul(rng.gaussian_mat(n, r), rng.gaussian_mat(r, d));
  }
  return rng.gaussian_mat(n, d);
}

}  // namespace

TEST_CASE("decompose: hand-checked instances") {
  SECTION("already diagonal 1x2") {
    Mat x(1, 2);
    x(0, 0) = 3.0;
    const SpectralDecomposition dec = decompose(x, 1e-12);
    REQUIRE(dec.singular_values.size() == 1);
    REQUIRE(dec.singular_values[0] == Approx(3.0).margin(1e-12));
    REQUIRE(dec.rank == 1);
    REQUIRE(dec.over_parameterized());
    REQUIRE(dec.right_basis(0, 0) == Approx(1.0).margin(1e-14));
    REQUIRE(dec.right_basis(1, 0) == Approx(0.0).margin(1e-14));
    REQUIRE(dec.right_basis(0, 1) == Approx(0.0).margin(1e-14));
    REQUIRE(std::abs(dec.right_basis(1, 1)) == Approx(1.0).margin(1e-14));
  }
  SECTION("identity 2x2") {
    const SpectralDecomposition dec = decompose(Mat::identity(2));
    REQUIRE(dec.rank == 2);
    REQUIRE(dec.singular_values[0] == Approx(1.0).margin(1e-14));
    REQUIRE(dec.singular_values[1] == Approx(1.0).margin(1e-14));
    REQUIRE_FALSE(dec.over_parameterized());
  }
  SECTION("rank-one 1x3 row") {
    Mat x(1, 3);
    x(0, 0) = 1.0; x(0, 1) = 2.0; x(0, 2) = 2.0;
    const SpectralDecomposition dec = decompose(x);
    REQUIRE(dec.singular_values[0] == Approx(3.0).margin(1e-12));
    REQUIRE(dec.rank == 1);
    REQUIRE(dec.right_basis(0, 0) == Approx(1.0 / 3.0).margin(1e-12));
    REQUIRE(dec.right_basis(1, 0) == Approx(2.0 / 3.0).margin(1e-12));
    REQUIRE(dec.right_basis(2, 0) == Approx(2.0 / 3.0).margin(1e-12));
    const Mat rec = reconstruct(dec);
    for (std::size_t j = 0; j < 3; ++j)
      REQUIRE(rec(0, j) == Approx(x(0, j)).margin(1e-10));
  }
}

TEST_CASE("decompose: invariants on random instances") {
  SplitMix64 rng(20240521);
  for (int trial = 0; trial < 60; ++trial) {
    const Mat x = random_instance(rng, 9, 14, trial % 3 == 0);
    const SpectralDecomposition dec = decompose(x);

    REQUIRE(orthogonality_error(dec.left_basis) <= 1e-10);
    REQUIRE(orthogonality_error(dec.right_basis) <= 1e-10);

    const Mat rec = reconstruct(dec);
    double err = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j)
        err = std::max(err, std::abs(rec(i, j) - x(i, j)));
    REQUIRE(err <= 1e-10 * std::max(1.0, max_abs(x)));

    REQUIRE(dec.rank >= 1);
    REQUIRE(dec.rank <= std::min(x.rows(), x.cols()));
    for (std::size_t r = 0; r < dec.rank; ++r)
      REQUIRE(dec.singular_values[r] > dec.rank_tolerance);
    for (std::size_t r = dec.rank; r < dec.singular_values.size(); ++r)
      REQUIRE(dec.singular_values[r] <= dec.rank_tolerance);
    for (std::size_t r = 0; r + 1 < dec.singular_values.size(); ++r)
      REQUIRE(dec.singular_values[r] >= dec.singular_values[r + 1]);
    if (x.rows() < x.cols()) REQUIRE(dec.over_parameterized());
  }
}

TEST_CASE("decompose: error cases") {
  Mat zero(3, 4);
  REQUIRE_THROWS_AS(decompose(zero), AllZeroMatrix);
  Mat bad(2, 2);
  bad(0, 0) = std::nan("");
  REQUIRE_THROWS_AS(decompose(bad), NonFinite);
  Mat tiny(2, 2);
  tiny(0, 0) = 1e-14;
  REQUIRE_THROWS_AS(decompose(tiny, 1e-12), AllZeroMatrix);
}

TEST_CASE("to_spectral: split, isometry, round trip") {
  Mat x(1, 2);
  x(0, 0) = 3.0;
  const SpectralDecomposition dec = decompose(x);
  const SpectralVector sv = to_spectral(dec, {1.0, 2.0});
  REQUIRE(sv.full()[0] == Approx(1.0).margin(1e-14));
  REQUIRE(sv.full()[1] == Approx(2.0).margin(1e-14));
  REQUIRE(sv.in_span().size() == 1);
  REQUIRE(sv.out_span().size() == 1);
  REQUIRE(sv.in_span()[0] == Approx(1.0));
  REQUIRE(sv.out_span()[0] == Approx(2.0));
  REQUIRE_THROWS_AS(to_spectral(dec, {1.0, 2.0, 3.0}), DimensionMismatch);

  SplitMix64 rng(4711);
  for (int trial = 0; trial < 25; ++trial) {
    const Mat m = rng.gaussian_mat(3 + rng.next_u64() % 4, 5 + rng.next_u64() % 6);
    const SpectralDecomposition d2 = decompose(m);

    // a right-basis column maps to the matching coordinate vector
    const std::size_t col = rng.next_u64() % d2.d();
    Vec v(d2.d());
    for (std::size_t i = 0; i < d2.d(); ++i) v[i] = d2.right_basis(i, col);
    const SpectralVector e = to_spectral(d2, v);
    for (std::size_t i = 0; i < d2.d(); ++i)
      REQUIRE(e.full()[i] == Approx(i == col ? 1.0 : 0.0).margin(1e-12));

    const Vec w = rng.gaussian_vec(d2.d());
    const SpectralVector sw = to_spectral(d2, w);
    REQUIRE(std::abs(norm2(sw.full()) - norm2(w)) <= 1e-10);
    const Vec back = from_spectral(d2, sw);
    REQUIRE(norm_inf(sub(back, w)) <= 1e-12);
  }
}

TEST_CASE("precond_to_spectral: blocks and eigenvalue preservation") {
  SECTION("identity basis") {
    Mat x(1, 2);
    x(0, 0) = 3.0;
    const SpectralDecomposition dec = decompose(x);
    Mat d(2, 2);
    d(0, 0) = 4.0;
    d(1, 1) = 9.0;
    const SpectralPreconditioner sp = precond_to_spectral(dec, d);
    REQUIRE(sp.full()(0, 0) == Approx(4.0).margin(1e-12));
    REQUIRE(sp.full()(1, 1) == Approx(9.0).margin(1e-12));
    REQUIRE(sp.coupling_block()(0, 0) == Approx(0.0).margin(1e-14));
  }
  SECTION("45 degree rotation, direct multiply oracle") {
    // X = 3 * u v^T with v at 45 degrees makes the right basis a rotation.
    const double c = std::sqrt(0.5);
    Mat x(1, 2);
    x(0, 0) = 3.0 * c;
    x(0, 1) = 3.0 * c;
    const SpectralDecomposition dec = decompose(x);
    Mat d(2, 2);
    d(0, 0) = 1.0;
    d(1, 1) = 3.0;
    const SpectralPreconditioner sp = precond_to_spectral(dec, d);
    const Mat oracle =
        matmul(transpose(dec.right_basis), matmul(d, dec.right_basis));
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j)
        REQUIRE(sp.full()(i, j) == Approx(oracle(i, j)).margin(1e-12));
    REQUIRE(sp.full()(0, 0) == Approx(2.0).margin(1e-12));
    REQUIRE(sp.full()(1, 1) == Approx(2.0).margin(1e-12));
    REQUIRE(std::abs(sp.full()(0, 1)) == Approx(1.0).margin(1e-12));
    const SymmetricEigen eigs = eigh(sp.full());
    REQUIRE(eigs.values[0] == Approx(3.0).margin(1e-8));
    REQUIRE(eigs.values[1] == Approx(1.0).margin(1e-8));
  }
  SECTION("identity preconditioner stays identity in any basis") {
    SplitMix64 rng(99);
    const Mat m = rng.gaussian_mat(4, 7);
    const SpectralDecomposition dec = decompose(m);
    const SpectralPreconditioner sp = precond_to_spectral(dec, Mat::identity(7));
    for (std::size_t i = 0; i < 7; ++i)
      for (std::size_t j = 0; j < 7; ++j)
        REQUIRE(sp.full()(i, j) == Approx(i == j ? 1.0 : 0.0).margin(1e-12));
    REQUIRE(spectral_norm(sp.coupling_block()) <= 1e-12);
  }
  SECTION("eigenvalue multiset preserved for random symmetric input") {
    SplitMix64 rng(555);
    for (int trial = 0; trial < 15; ++trial) {
      const Mat m = rng.gaussian_mat(3, 8);
      const SpectralDecomposition dec = decompose(m);
      Mat d = rng.gaussian_mat(8, 8);
      symmetrize(d);
      const SpectralPreconditioner sp = precond_to_spectral(dec, d);
      const Vec before = eigh(d).values;
      const Vec after = eigh(sp.full()).values;
      for (std::size_t i = 0; i < before.size(); ++i)
        REQUIRE(after[i] == Approx(before[i]).margin(1e-8));
    }
  }
  SECTION("rejects asymmetric input") {
    Mat x(1, 2);
    x(0, 0) = 3.0;
    const SpectralDecomposition dec = decompose(x);
    Mat d(2, 2);
    d(0, 1) = 1.0;
    REQUIRE_THROWS_AS(precond_to_spectral(dec, d), NotSymmetric);
    REQUIRE_THROWS_AS(precond_to_spectral(dec, Mat::identity(3)), DimensionMismatch);
  }
}

TEST_CASE("project_onto_span") {
  SECTION("identity input keeps both blocks") {
    SplitMix64 rng(31);
    const Mat m = rng.gaussian_mat(3, 6);
    const SpectralDecomposition dec = decompose(m);
    const Mat projected = project_onto_span(dec, Mat::identity(6));
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j)
        REQUIRE(projected(i, j) == Approx(i == j ? 1.0 : 0.0).margin(1e-12));
  }
  SECTION("identity basis, explicit blocks") {
    Mat x(1, 2);
    x(0, 0) = 3.0;
    const SpectralDecomposition dec = decompose(x);
    Mat d(2, 2);
    d(0, 0) = 2.0; d(0, 1) = 1.0;
    d(1, 0) = 1.0; d(1, 1) = 5.0;
    const Mat projected = project_onto_span(dec, d);
    REQUIRE(projected(0, 0) == Approx(2.0).margin(1e-12));
    REQUIRE(projected(0, 1) == Approx(0.0).margin(1e-14));
    REQUIRE(projected(1, 0) == Approx(0.0).margin(1e-14));
    REQUIRE(projected(1, 1) == Approx(1.0).margin(1e-12));
  }
  SECTION("coupling block vanishes and in-span block is preserved") {
    SplitMix64 rng(77101);
    for (int trial = 0; trial < 10; ++trial) {
      const Mat m = rng.gaussian_mat(3, 7);
      const SpectralDecomposition dec = decompose(m);
      Mat d = rng.gaussian_mat(7, 7);
      symmetrize(d);
      const SpectralPreconditioner before = precond_to_spectral(dec, d);
      const SpectralPreconditioner after =
          precond_to_spectral(dec, project_onto_span(dec, d));
      REQUIRE(spectral_norm(after.coupling_block()) <= 1e-14);
      const Mat bin = before.in_span_block();
      const Mat ain = after.in_span_block();
      for (std::size_t i = 0; i < bin.rows(); ++i)
        for (std::size_t j = 0; j < bin.cols(); ++j)
          REQUIRE(ain(i, j) == Approx(bin(i, j)).margin(1e-12));
    }
  }
}

TEST_CASE("min_norm_solution") {
  SECTION("hand examples") {
    Mat a(1, 2);
    a(0, 0) = 1.0; a(0, 1) = 1.0;
    Vec w = min_norm_solution(a, {2.0});
    REQUIRE(w[0] == Approx(1.0).margin(1e-12));
    REQUIRE(w[1] == Approx(1.0).margin(1e-12));

    Vec w2 = min_norm_solution(Mat::identity(2), {3.0, 4.0});
    REQUIRE(w2[0] == Approx(3.0).margin(1e-12));
    REQUIRE(w2[1] == Approx(4.0).margin(1e-12));

    Mat c(2, 2);
    c(0, 0) = 1.0; c(1, 0) = 1.0;
    Vec w3 = min_norm_solution(c, {1.0, 1.0});
    REQUIRE(w3[0] == Approx(1.0).margin(1e-12));
    REQUIRE(w3[1] == Approx(0.0).margin(1e-12));
  }
  SECTION("residual minimal and no out-of-span component") {
    SplitMix64 rng(808);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t n = 2 + rng.next_u64() % 5;
      const std::size_t d = n + 1 + rng.next_u64() % 6;
      const Mat x = rng.gaussian_mat(n, d);
      const Vec y = rng.gaussian_vec(n);
      const Vec w = min_norm_solution(x, y);
      // interpolates (y is in the range of a full-row-rank x)
      REQUIRE(norm2(sub(matvec(x, w), y)) <= 1e-10 * std::max(1.0, norm2(y)));
      // no null-space component
      const SpectralDecomposition dec = decompose(x);
      const SpectralVector sw = to_spectral(dec, w);
      double out = 0.0;
      for (double v : sw.out_span()) out += v * v;
      REQUIRE(std::sqrt(out) <= 1e-10);
      // any interpolant is at least as long
      Vec longer = w;
      for (std::size_t i = 0; i < 3; ++i) {
        Vec null_dir(d, 0.0);
        for (std::size_t j = 0; j < d; ++j)
          null_dir[j] = dec.right_basis(j, dec.rank + i % (d - dec.rank));
        axpy(longer, 0.5, null_dir);
      }
      REQUIRE(norm2(longer) >= norm2(w));
    }
  }
  SECTION("tall full-column-rank matrices match the normal equations") {
    SplitMix64 rng(4242);
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t d = 2 + rng.next_u64() % 4;
      const std::size_t n = d + 1 + rng.next_u64() % 5;
      const Mat x = rng.gaussian_mat(n, d);
      const Vec y = rng.gaussian_vec(n);
      const Vec w = min_norm_solution(x, y);
      // oracle: w = (X^T X)^{-1} X^T y via an eigendecomposition of the Gram
      const Mat gram = matmul(transpose(x), x);
      const SymmetricEigen e = eigh(gram);
      const Vec xty = tmatvec(x, y);
      Vec coeffs = tmatvec(e.vectors, xty);
      for (std::size_t i = 0; i < d; ++i) coeffs[i] /= e.values[i];
      const Vec expect = matvec(e.vectors, coeffs);
      REQUIRE(norm_inf(sub(w, expect)) <= 1e-9 * std::max(1.0, norm_inf(expect)));
    }
  }
  SECTION("error cases") {
    Mat bad(1, 1);
    bad(0, 0) = std::numeric_limits<double>::infinity();
    REQUIRE_THROWS_AS(min_norm_solution(bad, {1.0}), NonFinite);
  }
}
