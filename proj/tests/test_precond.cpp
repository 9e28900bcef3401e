#include <catch2/catch.hpp>

#include <memory>

#include "specdyn/dynamics.hpp"
#include "specdyn/experiments.hpp"
#include "specdyn/precond.hpp"
#include "specdyn/rng.hpp"

using namespace specdyn;

namespace {

std::shared_ptr<const SpectralDecomposition> shared_decomp(const Mat& x) {
  return std::make_shared<const SpectralDecomposition>(decompose(x));
}

}  // namespace

TEST_CASE("identity family emits the identity") {
  PrecondConfig cfg;
  PrecondState state(cfg);
  const auto step = state.advance({0.3, -4.0, 2.0});
  const Mat d = step.d.to_dense();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      REQUIRE(d(i, j) == Approx(i == j ? 1.0 : 0.0));
  REQUIRE(step.direction[1] == Approx(-4.0));
}

TEST_CASE("diag adagrad squared: first-step arithmetic") {
  PrecondConfig cfg;
  cfg.family = PrecondFamily::DiagAdaGradSquared;
  cfg.epsilon = 1e-8;
  PrecondState state(cfg);
  const auto step = state.advance({1.0, 2.0});
  REQUIRE(step.d.diag[0] == Approx(1.0 / (1.0 + 1e-8)).epsilon(1e-15));
  REQUIRE(step.d.diag[1] == Approx(1.0 / (16.0 + 1e-8)).epsilon(1e-15));
}

TEST_CASE("diag adagrad: zero gradient at t=0 gives the epsilon floor") {
  PrecondConfig cfg;
  cfg.family = PrecondFamily::DiagAdaGrad;
  cfg.epsilon = 1e-8;
  PrecondState state(cfg);
  const auto step = state.advance({0.0, 0.0});
  REQUIRE(step.d.diag[0] == Approx(1e8));
  REQUIRE(step.d.diag[1] == Approx(1e8));
  REQUIRE(is_finite(step.d.diag));
}

TEST_CASE("no-sqrt variant arithmetic") {
  PrecondConfig cfg;
  cfg.family = PrecondFamily::DiagAdaGrad;
  cfg.take_sqrt = false;
  cfg.epsilon = 1e-8;
  PrecondState state(cfg);
  const auto step = state.advance({2.0});
  REQUIRE(step.d.diag[0] == Approx(1.0 / (4.0 + 1e-8)).epsilon(1e-15));
}

TEST_CASE("windowed accumulator matches the brute-force sum") {
  PrecondConfig cfg;
  cfg.family = PrecondFamily::DiagAdaGrad;
  cfg.window = 7;
  PrecondState state(cfg);
  SplitMix64 rng(1234);
  for (int t = 0; t < 25; ++t) {
    state.advance(rng.gaussian_vec(5));
    const Vec brute = state.recompute_sum_sq();
    for (std::size_t i = 0; i < 5; ++i)
      REQUIRE(state.sum_sq()[i] == Approx(brute[i]).margin(1e-12));
  }
}

TEST_CASE("every family emits a symmetric positive definite matrix") {
  SplitMix64 rng(2025);
  const Mat x = rng.gaussian_mat(4, 9);
  auto dec = shared_decomp(x);
  for (PrecondFamily fam :
       {PrecondFamily::Identity, PrecondFamily::DiagAdaGrad,
        PrecondFamily::DiagAdaGradSquared, PrecondFamily::SpanProjectedDiagAdaGrad,
        PrecondFamily::FullMatrixAdaGrad, PrecondFamily::RidgeInverse,
        PrecondFamily::RMSProp, PrecondFamily::Adam}) {
    PrecondConfig cfg;
    cfg.family = fam;
    cfg.epsilon = 0.5;
    cfg.window = 4;
    PrecondState state(cfg, dec);
    for (int t = 0; t < 6; ++t) {
      const auto step = state.advance(rng.gaussian_vec(9));
      const Mat d = step.d.to_dense();
      REQUIRE(max_asymmetry(d) <= 1e-10 * std::max(1.0, max_abs(d)));
      const SymmetricEigen e = eigh(d);
      REQUIRE(e.values.back() > 0.0);
      REQUIRE(is_finite(step.direction));
      REQUIRE(step.d.max_eigenvalue() >= e.values.front() - 1e-8);
    }
  }
}

TEST_CASE("span-preserving families have zero coupling for all t") {
  SplitMix64 rng(5150);
  const Mat x = rng.gaussian_mat(3, 8);
  auto dec = shared_decomp(x);
  const Vec y = rng.gaussian_vec(3);

  SECTION("identity and ridge inverse within 1e-12") {
    for (PrecondFamily fam : {PrecondFamily::Identity, PrecondFamily::RidgeInverse}) {
      PrecondConfig cfg;
      cfg.family = fam;
      cfg.epsilon = 1e-8;  // large inverse entries stress the bookkeeping
      PrecondState state(cfg, dec);
      for (int t = 0; t < 5; ++t) {
        const auto step = state.advance(rng.gaussian_vec(8));
        REQUIRE(precond_to_spectral(*dec, step.d).coupling_norm() <= 1e-12);
      }
    }
  }
  SECTION("span-projected adagrad exactly by construction") {
    PrecondConfig cfg;
    cfg.family = PrecondFamily::SpanProjectedDiagAdaGrad;
    PrecondState state(cfg, dec);
    for (int t = 0; t < 5; ++t) {
      const auto step = state.advance(rng.gaussian_vec(8));
      REQUIRE(precond_to_spectral(*dec, step.d).coupling_norm() <= 1e-14);
    }
  }
}

TEST_CASE("span-projected advance equals project_onto_span of the diagonal") {
  SplitMix64 rng(606);
  const Mat x = rng.gaussian_mat(3, 7);
  auto dec = shared_decomp(x);
  PrecondConfig projected_cfg;
  projected_cfg.family = PrecondFamily::SpanProjectedDiagAdaGrad;
  PrecondConfig diag_cfg;
  diag_cfg.family = PrecondFamily::DiagAdaGrad;
  PrecondState projected(projected_cfg, dec);
  PrecondState diagonal(diag_cfg);
  for (int t = 0; t < 4; ++t) {
    const Vec g = rng.gaussian_vec(7);
    const Mat via_family = projected.advance(g).d.to_dense();
    const Mat via_op = project_onto_span(*dec, diagonal.advance(g).d.to_dense());
    for (std::size_t i = 0; i < 7; ++i)
      for (std::size_t j = 0; j < 7; ++j)
        REQUIRE(via_family(i, j) == Approx(via_op(i, j)).margin(1e-12));
  }
}

TEST_CASE("full-matrix adagrad: D squares to the inverse of G + eps I") {
  PrecondConfig cfg;
  cfg.family = PrecondFamily::FullMatrixAdaGrad;
  cfg.epsilon = 0.25;
  PrecondState state(cfg);
  SplitMix64 rng(8181);
  Mat g_sum(5, 5);
  Mat d;
  for (int t = 0; t < 3; ++t) {
    const Vec g = rng.gaussian_vec(5);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j) g_sum(i, j) += g[i] * g[j];
    d = state.advance(g).d.to_dense();
  }
  // oracle: D * (G + eps I) * D = I
  Mat geps = g_sum;
  for (std::size_t i = 0; i < 5; ++i) geps(i, i) += cfg.epsilon;
  const Mat should_be_identity = matmul(d, matmul(geps, d));
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      REQUIRE(should_be_identity(i, j) == Approx(i == j ? 1.0 : 0.0).margin(1e-8));
}

TEST_CASE("ridge inverse is constant and matches the explicit inverse") {
  SplitMix64 rng(11);
  const Mat x = rng.gaussian_mat(2, 5);
  auto dec = shared_decomp(x);
  PrecondConfig cfg;
  cfg.family = PrecondFamily::RidgeInverse;
  cfg.epsilon = 0.7;
  PrecondState state(cfg, dec);
  const Mat d1 = state.advance(rng.gaussian_vec(5)).d.to_dense();
  const Mat d2 = state.advance(rng.gaussian_vec(5)).d.to_dense();
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) REQUIRE(d1(i, j) == Approx(d2(i, j)).margin(0.0));
  // oracle: D * (X^T X + eps I) = I
  Mat xtx = matmul(transpose(x), x);
  for (std::size_t i = 0; i < 5; ++i) xtx(i, i) += cfg.epsilon;
  const Mat prod = matmul(d1, xtx);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      REQUIRE(prod(i, j) == Approx(i == j ? 1.0 : 0.0).margin(1e-9));
}

TEST_CASE("is_in_span_family") {
  SplitMix64 rng(2313);
  const Mat x = rng.gaussian_mat(1, 2);
  auto dec = shared_decomp(x);
  auto with_family = [](PrecondFamily f) {
    PrecondConfig cfg;
    cfg.family = f;
    return cfg;
  };
  REQUIRE(is_in_span_family(with_family(PrecondFamily::Identity), *dec));
  REQUIRE(is_in_span_family(with_family(PrecondFamily::RidgeInverse), *dec));
  REQUIRE(is_in_span_family(with_family(PrecondFamily::SpanProjectedDiagAdaGrad), *dec));
  REQUIRE_FALSE(is_in_span_family(with_family(PrecondFamily::DiagAdaGrad), *dec));
  REQUIRE_FALSE(is_in_span_family(with_family(PrecondFamily::Adam), *dec));

  // the diagonal family really does couple: 1x2 instance, nonzero iterate.
  // The regularizer term makes the gradient coordinates distinct, so the
  // emitted diagonal is anisotropic and picks up a coupling block.
  Mat data(1, 2);
  data(0, 0) = 1.0;
  data(0, 1) = 1.0;
  const RegressionProblem p = make_problem_from_labels(data, {1.0}, 0.5);
  PrecondConfig cfg = with_family(PrecondFamily::DiagAdaGrad);
  PrecondState state(cfg);
  const Vec g = loss_and_gradient(p, {0.5, -1.0}).gradient;
  const auto step = state.advance(g);
  REQUIRE(precond_to_spectral(*p.decomp, step.d).coupling_norm() > 1e-6);
}

TEST_CASE("rmsprop and adam emit finite positive diagonals") {
  SplitMix64 rng(500);
  for (PrecondFamily fam : {PrecondFamily::RMSProp, PrecondFamily::Adam}) {
    PrecondConfig cfg;
    cfg.family = fam;
    PrecondState state(cfg);
    for (int t = 0; t < 10; ++t) {
      const auto step = state.advance(rng.gaussian_vec(4));
      for (double v : step.d.diag) {
        REQUIRE(std::isfinite(v));
        REQUIRE(v > 0.0);
      }
      REQUIRE(is_finite(step.direction));
    }
  }
}

TEST_CASE("advance error cases") {
  PrecondConfig cfg;
  cfg.family = PrecondFamily::SpanProjectedDiagAdaGrad;
  REQUIRE_THROWS_AS(PrecondState(cfg), MissingDecomposition);
  cfg.family = PrecondFamily::RidgeInverse;
  REQUIRE_THROWS_AS(PrecondState(cfg), MissingDecomposition);

  PrecondConfig ok;
  PrecondState state(ok);
  REQUIRE_THROWS_AS(state.advance({std::nan(""), 1.0}), NonFiniteGradient);
  state.advance({1.0, 2.0});
  REQUIRE_THROWS_AS(state.advance({1.0}), DimensionMismatch);

  PrecondConfig bad;
  bad.epsilon = 0.0;
  REQUIRE_THROWS_AS(PrecondState(bad), ConfigError);
}

TEST_CASE("config serialization round trip") {
  PrecondConfig cfg;
  cfg.family = PrecondFamily::DiagAdaGradSquared;
  cfg.epsilon = 3e-7;
  cfg.window = std::nullopt;
  cfg.take_sqrt = false;
  cfg.rho = 0.95;
  cfg.beta1 = 0.8;
  cfg.beta2 = 0.91;
  const PrecondConfig back = PrecondConfig::from_kv(cfg.to_kv());
  REQUIRE(back.family == cfg.family);
  REQUIRE(back.epsilon == cfg.epsilon);
  REQUIRE_FALSE(back.window.has_value());
  REQUIRE(back.take_sqrt == cfg.take_sqrt);
  REQUIRE(back.rho == cfg.rho);
  REQUIRE(back.beta1 == cfg.beta1);
  REQUIRE(back.beta2 == cfg.beta2);

  PrecondConfig bounded;
  bounded.window = 17;
  REQUIRE(PrecondConfig::from_kv(bounded.to_kv()).window == std::size_t{17});
  REQUIRE_THROWS_AS(PrecondConfig::from_kv("family=unknown_thing\n"), ConfigError);
}
