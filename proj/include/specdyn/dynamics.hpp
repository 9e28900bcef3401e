#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "specdyn/errors.hpp"
#include "specdyn/linalg.hpp"
#include "specdyn/precond.hpp"
#include "specdyn/spectral.hpp"

namespace specdyn {

inline constexpr double kDivergenceThreshold = 1e12;

// Noisy over-parameterized regression instance plus its spectral quantities.
// Immutable after construction; shared freely across runs.
struct RegressionProblem {
  Mat x;          // n x d
  Vec w_star;     // d
  Vec zeta;       // n
  Vec y;          // n, equals x * w_star + zeta
  double lambda = 0.0;
  std::shared_ptr<const SpectralDecomposition> decomp;
  Vec spectral_w_star;  // V^T w_star
  Vec spectral_zeta;    // U^T zeta

  std::size_t n() const { return x.rows(); }
  std::size_t d() const { return x.cols(); }
  std::size_t rank() const { return decomp->rank; }
};

inline RegressionProblem make_problem(Mat x, Vec w_star, Vec zeta, double lambda) {
  if (w_star.size() != x.cols() || zeta.size() != x.rows())
    throw DimensionMismatch("make_problem: w_star/zeta sizes do not match x");
  if (!is_finite(x) || !is_finite(w_star) || !is_finite(zeta))
    throw NonFinite("make_problem: non-finite input");
  if (lambda < 0.0) throw ConfigError("make_problem: lambda must be nonnegative");
  RegressionProblem p;
  p.x = std::move(x);
  p.w_star = std::move(w_star);
  p.zeta = std::move(zeta);
  p.y = matvec(p.x, p.w_star);
  for (std::size_t i = 0; i < p.y.size(); ++i) p.y[i] += p.zeta[i];
  p.lambda = lambda;
  p.decomp = std::make_shared<const SpectralDecomposition>(decompose(p.x));
  p.spectral_w_star = tmatvec(p.decomp->right_basis, p.w_star);
  p.spectral_zeta = tmatvec(p.decomp->left_basis, p.zeta);
  return p;
}

// Builds a problem from observed labels: w_star is taken as the minimum-norm
// least-squares solution and zeta as the leftover residual, so y always
// decomposes exactly.
inline RegressionProblem make_problem_from_labels(Mat x, Vec y, double lambda) {
  if (y.size() != x.rows())
    throw DimensionMismatch("make_problem_from_labels: label length mismatch");
  if (!is_finite(x) || !is_finite(y))
    throw NonFinite("make_problem_from_labels: non-finite input");
  RegressionProblem p;
  p.x = std::move(x);
  p.lambda = lambda;
  p.decomp = std::make_shared<const SpectralDecomposition>(decompose(p.x));
  p.w_star = min_norm_solution(*p.decomp, y);
  Vec fit = matvec(p.x, p.w_star);
  p.zeta = sub(y, fit);
  p.y = std::move(y);
  p.spectral_w_star = tmatvec(p.decomp->right_basis, p.w_star);
  p.spectral_zeta = tmatvec(p.decomp->left_basis, p.zeta);
  return p;
}

struct LossGradient {
  double loss;
  Vec gradient;
};

// f(w) = 1/2 ||y - Xw||^2 + (lambda/2) ||w||^2, grad = X^T (Xw - y) + lambda w.
inline LossGradient loss_and_gradient(const RegressionProblem& p, const Vec& w) {
  if (w.size() != p.d())
    throw DimensionMismatch("loss_and_gradient: w length does not match d");
  if (!is_finite(w)) throw NonFinite("loss_and_gradient: w has NaN/Inf entries");
  Vec residual = matvec(p.x, w);
  for (std::size_t i = 0; i < residual.size(); ++i) residual[i] -= p.y[i];
  LossGradient out;
  out.loss = 0.5 * dot(residual, residual) + 0.5 * p.lambda * dot(w, w);
  out.gradient = tmatvec(p.x, residual);
  if (p.lambda != 0.0) axpy(out.gradient, p.lambda, w);
  return out;
}

// In-span limit of the iterates when lambda = 0 (length R).
inline Vec inspan_fixed_point(const RegressionProblem& p) {
  if (p.lambda != 0.0)
    throw RegularizedProblem("inspan_fixed_point: requires lambda = 0");
  Vec v(p.rank());
  for (std::size_t r = 0; r < p.rank(); ++r)
    v[r] = p.spectral_w_star[r] + p.spectral_zeta[r] / p.decomp->sigma(r);
  return v;
}

// Unique spectral-domain limit when lambda > 0; out-of-span entries are
// exactly zero.
inline SpectralVector regularized_fixed_point(const RegressionProblem& p) {
  if (p.lambda <= 0.0)
    throw UnregularizedProblem("regularized_fixed_point: requires lambda > 0");
  Vec full(p.d(), 0.0);
  for (std::size_t r = 0; r < p.rank(); ++r) {
    const double s = p.decomp->sigma(r);
    full[r] = (s * s * p.spectral_w_star[r] + s * p.spectral_zeta[r]) /
              (s * s + p.lambda);
  }
  return SpectralVector(std::move(full), p.rank());
}

// 2 / (d_max * (sigma_max^2 + lambda)): upper end of the step sizes for which
// the preconditioned dynamics contract.
inline double max_stable_step(const SpectralDecomposition& decomp, double d_max,
                              double lambda) {
  const double s = decomp.sigma_max();
  return 2.0 / (d_max * (s * s + lambda));
}

// Per-step record of a run. All populated series have length T+1; the
// coupling-norm series is filled only when requested in RunOptions.
struct Trajectory {
  std::vector<Vec> iterates;
  Vec losses;
  Vec in_span_error;   // distance of the in-span block from its analytic limit
  Vec out_span_drift;  // || w~_2(t) - w~_2(0) ||
  Vec coupling_norm;   // sigma_max of the coupling block of D~(t)
  double eta = 0.0;
  std::vector<Precond> preconditioners;  // D(0..T-1) when recorded

  std::size_t steps() const { return losses.empty() ? 0 : losses.size() - 1; }
};

struct RunOptions {
  bool record_preconditioners = false;
  bool record_coupling_norm = false;
  double early_stop_loss = -1.0;  // stop once loss drops below; < 0 disables
};

// Iterates w(t+1) = w(t) - eta * D(t) grad f(w(t)) for T steps. Throws
// Diverged (with the offending step) when an iterate norm crosses 1e12.
inline Trajectory run(const RegressionProblem& p, PrecondState precond, double eta,
                      std::size_t steps, const Vec& w0, const RunOptions& opts = {}) {
  if (!(eta > 0.0)) throw ConfigError("run: eta must be positive");
  if (steps < 1) throw ConfigError("run: need at least one step");
  if (w0.size() != p.d()) throw DimensionMismatch("run: w0 length does not match d");
  if (!is_finite(w0)) throw NonFinite("run: w0 has NaN/Inf entries");

  const Vec target_in = p.lambda > 0.0
                            ? regularized_fixed_point(p).in_span_vec()
                            : inspan_fixed_point(p);

  Trajectory traj;
  traj.eta = eta;
  traj.iterates.reserve(steps + 1);
  traj.losses.reserve(steps + 1);

  Vec w = w0;
  Vec w0_spectral = tmatvec(p.decomp->right_basis, w0);
  const std::size_t r = p.rank();

  auto record = [&](const Vec& iterate, double loss) {
    traj.iterates.push_back(iterate);
    traj.losses.push_back(loss);
    Vec wt = tmatvec(p.decomp->right_basis, iterate);
    double e1 = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
      const double dlt = target_in[i] - wt[i];
      e1 += dlt * dlt;
    }
    traj.in_span_error.push_back(std::sqrt(e1));
    double drift = 0.0;
    for (std::size_t i = r; i < wt.size(); ++i) {
      const double dlt = wt[i] - w0_spectral[i];
      drift += dlt * dlt;
    }
    traj.out_span_drift.push_back(std::sqrt(drift));
  };

  LossGradient lg = loss_and_gradient(p, w);
  record(w, lg.loss);

  for (std::size_t t = 0; t < steps; ++t) {
    PrecondState::Step step = precond.advance(lg.gradient);
    axpy(w, -eta, step.direction);
    if (!is_finite(w) || norm2(w) > kDivergenceThreshold) throw Diverged(t + 1);
    if (opts.record_coupling_norm)
      traj.coupling_norm.push_back(
          precond_to_spectral(*p.decomp, step.d).coupling_norm());
    if (opts.record_preconditioners) traj.preconditioners.push_back(step.d);
    lg = loss_and_gradient(p, w);
    record(w, lg.loss);
    if (opts.early_stop_loss >= 0.0 && lg.loss < opts.early_stop_loss) break;
  }

  if (opts.record_coupling_norm) {
    // Preconditioner the state would emit at the final iterate, so the series
    // has one entry per recorded step.
    PrecondState peek = precond;
    PrecondState::Step step = peek.advance(lg.gradient);
    traj.coupling_norm.push_back(
        precond_to_spectral(*p.decomp, step.d).coupling_norm());
  }
  return traj;
}

// Spectral closed form of the iterate after T steps:
//   w~(T) = prod_{i<T} M(i) w~(0) + sum_i prod_{j>i} M(j) eta D~(i) b,
// with M(i) = I - eta D~(i)(Lambda^2 + lambda I) and b = Lambda^2 w~* +
// Lambda zeta~. Later-time factors multiply on the left; the products are
// accumulated as suffix products, one matrix multiply per step.
inline SpectralVector closed_form_iterate(const RegressionProblem& p,
                                          std::span<const Precond> precond_sequence,
                                          double eta,
                                          const SpectralVector& w0_spectral) {
  if (precond_sequence.empty())
    throw DimensionMismatch("closed_form_iterate: empty preconditioner sequence");
  if (w0_spectral.full().size() != p.d())
    throw DimensionMismatch("closed_form_iterate: w0 length does not match d");
  const std::size_t d = p.d();

  Vec b(d, 0.0);
  Vec kappa(d, p.lambda);
  for (std::size_t i = 0; i < d; ++i) {
    const double s = p.decomp->sigma(i);
    kappa[i] += s * s;
    if (i < p.spectral_zeta.size())
      b[i] = s * s * p.spectral_w_star[i] + s * p.spectral_zeta[i];
    else
      b[i] = s * s * p.spectral_w_star[i];
  }

  Mat suffix = Mat::identity(d);
  Vec acc(d, 0.0);
  for (std::size_t idx = precond_sequence.size(); idx-- > 0;) {
    const Mat dt = precond_to_spectral(*p.decomp, precond_sequence[idx]).full();
    Vec forced = matvec(dt, b);
    for (double& v : forced) v *= eta;
    Vec pushed = matvec(suffix, forced);
    for (std::size_t i = 0; i < d; ++i) acc[i] += pushed[i];

    Mat m(d, d);  // M(idx) = I - eta * D~ * diag(kappa)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        m(i, j) = (i == j ? 1.0 : 0.0) - eta * dt(i, j) * kappa[j];
    suffix = matmul(suffix, m);
  }

  Vec result = matvec(suffix, w0_spectral.full());
  for (std::size_t i = 0; i < d; ++i) result[i] += acc[i];
  return SpectralVector(std::move(result), p.rank());
}

struct BlockIterate {
  Vec in_span;   // length R
  Vec out_span;  // length d - R
};

// Block closed form for lambda = 0: the in-span block via the product of
// in-span factors, the out-of-span block via the coupling recursion
//   B(t2,t1) = -eta D~_2(t1) L^2 - eta sum_{i>t1} D~_2(i) L^2 A(i-1,t1),
// both evaluated with backward suffix recurrences.
inline BlockIterate block_closed_form(const RegressionProblem& p,
                                      std::span<const Precond> precond_sequence,
                                      double eta,
                                      const SpectralVector& w0_spectral) {
  if (p.lambda != 0.0)
    throw RegularizedProblem("block_closed_form: requires lambda = 0");
  if (precond_sequence.empty())
    throw DimensionMismatch("block_closed_form: empty preconditioner sequence");
  if (w0_spectral.full().size() != p.d())
    throw DimensionMismatch("block_closed_form: w0 length does not match d");

  const std::size_t d = p.d();
  const std::size_t r = p.rank();
  const std::size_t m = d - r;
  const std::size_t steps = precond_sequence.size();

  Vec lam_sq(r);
  Vec b1(r);  // Lambda_1^2 (w~*_1 + Lambda_1^{-1} zeta~_1)
  for (std::size_t i = 0; i < r; ++i) {
    const double s = p.decomp->sigma(i);
    lam_sq[i] = s * s;
    b1[i] = s * s * p.spectral_w_star[i] + s * p.spectral_zeta[i];
  }

  std::vector<Mat> d1(steps), d2(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    const SpectralPreconditioner sp = precond_to_spectral(*p.decomp, precond_sequence[i]);
    d1[i] = sp.in_span_block();
    d2[i] = sp.coupling_block();
  }

  auto in_factor = [&](std::size_t i) {
    Mat f(r, r);  // I - eta D~_1(i) Lambda_1^2
    for (std::size_t a = 0; a < r; ++a)
      for (std::size_t c = 0; c < r; ++c)
        f(a, c) = (a == c ? 1.0 : 0.0) - eta * d1[i](a, c) * lam_sq[c];
    return f;
  };

  // In-span block: suffix products of the in-span factors.
  Mat suffix = Mat::identity(r);
  Vec acc1(r, 0.0);
  for (std::size_t idx = steps; idx-- > 0;) {
    Vec forced = matvec(d1[idx], b1);
    for (double& v : forced) v *= eta;
    Vec pushed = matvec(suffix, forced);
    for (std::size_t i = 0; i < r; ++i) acc1[i] += pushed[i];
    suffix = matmul(suffix, in_factor(idx));
  }
  Vec w0_in = w0_spectral.in_span_vec();
  BlockIterate out;
  out.in_span = matvec(suffix, w0_in);
  for (std::size_t i = 0; i < r; ++i) out.in_span[i] += acc1[i];

  // Out-of-span block.
  Mat coupling_sum(m, r);  // C(t1) accumulator of the recursion
  Mat b_next(m, r);        // B(T-1, idx+1)
  Vec acc2(m, 0.0);
  auto scale_cols = [&](const Mat& mat) {
    Mat s = mat;  // columns scaled by Lambda_1^2
    for (std::size_t a = 0; a < s.rows(); ++a)
      for (std::size_t c = 0; c < s.cols(); ++c) s(a, c) *= lam_sq[c];
    return s;
  };
  for (std::size_t idx = steps; idx-- > 0;) {
    Vec inner = matvec(d1[idx], b1);
    Vec term = matvec(b_next, inner);
    axpy(term, 1.0, matvec(d2[idx], b1));
    for (std::size_t i = 0; i < m; ++i) acc2[i] += eta * term[i];

    if (idx + 1 < steps) {
      Mat head = scale_cols(d2[idx + 1]);
      for (std::size_t a = 0; a < m; ++a)
        for (std::size_t c = 0; c < r; ++c) head(a, c) += coupling_sum(a, c);
      coupling_sum = matmul(head, in_factor(idx));
    } else {
      coupling_sum = Mat(m, r);
    }

    Mat b_cur = scale_cols(d2[idx]);
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t c = 0; c < r; ++c)
        b_cur(a, c) = -eta * b_cur(a, c) - eta * coupling_sum(a, c);
    b_next = std::move(b_cur);
  }
  out.out_span = matvec(b_next, w0_in);
  const Vec w0_out = w0_spectral.out_span_vec();
  for (std::size_t i = 0; i < m; ++i) out.out_span[i] += w0_out[i] + acc2[i];
  return out;
}

}  // namespace specdyn
