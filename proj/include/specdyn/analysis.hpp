#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <utility>

#include "specdyn/errors.hpp"
#include "specdyn/linalg.hpp"

namespace specdyn {

// Fitted power-law exponent of a positive series: series(t) ~ C / t^exponent.
struct DecayEstimate {
  double exponent = 0.0;
  double log_log_r2 = 0.0;
  std::size_t t_start = 0;
  std::size_t t_end = 0;
};

// Least-squares fit of log series(t) against log t over t in [t_start, t_end]
// (inclusive, t >= 1, series indexed so that series[t] is the value at step t).
inline DecayEstimate estimate_decay(const Vec& series, std::size_t t_start,
                                    std::size_t t_end) {
  if (t_start < 1) t_start = 1;
  if (t_end >= series.size())
    throw DimensionMismatch("estimate_decay: window exceeds series length");
  if (t_end < t_start || t_end - t_start + 1 < 5)
    throw WindowTooShort("estimate_decay: need at least 5 samples");
  for (std::size_t t = t_start; t <= t_end; ++t)
    if (!(series[t] > 0.0))
      throw NonPositiveSeries("estimate_decay: series must be positive on the window");

  const std::size_t n = t_end - t_start + 1;
  double sx = 0.0, sy = 0.0;
  for (std::size_t t = t_start; t <= t_end; ++t) {
    sx += std::log(static_cast<double>(t));
    sy += std::log(series[t]);
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t t = t_start; t <= t_end; ++t) {
    const double dx = std::log(static_cast<double>(t)) - mx;
    const double dy = std::log(series[t]) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  const double slope = sxy / sxx;
  double ss_res = 0.0;
  for (std::size_t t = t_start; t <= t_end; ++t) {
    const double dx = std::log(static_cast<double>(t)) - mx;
    const double dy = std::log(series[t]) - my;
    const double resid = dy - slope * dx;
    ss_res += resid * resid;
  }
  // A flat series carries no variance to explain; rounding crumbs in syy must
  // not read as a bad fit.
  const double flat = 1e-24 * n * (1.0 + my * my);
  DecayEstimate out;
  out.exponent = -slope;
  out.log_log_r2 = syy > flat ? 1.0 - ss_res / syy : 1.0;
  out.t_start = t_start;
  out.t_end = t_end;
  return out;
}

// Envelope constant: max over the window of series(t) * (t+1)^exponent, so
// series(t) <= c / (t+1)^exponent holds for every t in the window.
inline double envelope_constant(const Vec& series, double exponent,
                                std::size_t t_start, std::size_t t_end) {
  if (t_end >= series.size())
    throw DimensionMismatch("envelope_constant: window exceeds series length");
  double c = 0.0;
  for (std::size_t t = t_start; t <= t_end; ++t)
    c = std::max(c, series[t] * std::pow(static_cast<double>(t + 1), exponent));
  return c;
}

// Saturation bound on the out-of-span displacement for an (alpha, beta)-
// converging method:
//   c_lambda c_conv / (alpha + beta - 1)
//     + eta * ||D~_2(0)|| * sigma_max(Lambda_1)^2 * ||w~_1(0)||.
inline double out_of_span_bound(double c_lambda, double c_conv, double alpha,
                                double beta, double eta, double d2_norm_at_0,
                                double sigma_max_1, double w1_init_norm) {
  if (c_lambda < 0.0 || c_conv < 0.0 || alpha < 0.0 || beta < 0.0 || eta < 0.0 ||
      d2_norm_at_0 < 0.0 || w1_init_norm < 0.0)
    throw ConfigError("out_of_span_bound: arguments must be nonnegative");
  if (!(alpha + beta > 1.0))
    throw SubcriticalExponents("out_of_span_bound: requires alpha + beta > 1");
  return c_lambda * c_conv / (alpha + beta - 1.0) +
         eta * d2_norm_at_0 * sigma_max_1 * sigma_max_1 * w1_init_norm;
}

struct BoundCurveParams {
  double a = 1.0;
  double b = 0.7;
  double c = 0.1;
  double alpha = 1.5;
  double beta = 1.0;

  void validate() const {
    if (!(a > 0.0 && b > 0.0 && c > 0.0))
      throw ConfigError("bound curve: a, b, c must be positive");
    if (!(alpha >= 0.0 && beta >= 0.0))
      throw ConfigError("bound curve: alpha, beta must be nonnegative");
    if (!(alpha + beta > 1.0))
      throw SubcriticalExponents("bound curve: requires alpha + beta > 1");
  }
};

// Training-error bound dynamics:
//   a + b/(T+1)^beta * (1 - c/(alpha+beta-1) * 1/(T+1)^(alpha-1)).
inline double bound_curve(const BoundCurveParams& p, double steps) {
  p.validate();
  const double t1 = steps + 1.0;
  return p.a + p.b / std::pow(t1, p.beta) *
                   (1.0 - p.c / (p.alpha + p.beta - 1.0) / std::pow(t1, p.alpha - 1.0));
}

struct AdaGradVariantFixedPoint {
  Vec direction;  // unit vector
  double c;       // proportionality constant of X Q^{-1} sign(X^T y) = c y
};

// Checks the two hypotheses of the no-sqrt AdaGrad-variant fixed point: all
// components of X^T y nonzero, and X Q^{-1} sign(X^T y) proportional to y with
// Q = diag(|X^T y|). Returns the invariant direction when both hold.
inline std::optional<AdaGradVariantFixedPoint> adagrad_variant_fixed_point_oracle(
    const Mat& x, const Vec& y) {
  if (y.size() != x.rows())
    throw DimensionMismatch("fixed point oracle: label length mismatch");
  if (!is_finite(x) || !is_finite(y))
    throw NonFinite("fixed point oracle: non-finite input");
  Vec z = tmatvec(x, y);
  const double zmax = norm_inf(z);
  if (zmax == 0.0) return std::nullopt;
  for (double zi : z)
    if (std::abs(zi) <= 1e-12 * zmax) return std::nullopt;

  Vec dir(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) dir[i] = 1.0 / z[i];  // sign(z)/|z|
  const Vec p = matvec(x, dir);
  const double yy = dot(y, y);
  if (yy == 0.0) return std::nullopt;
  const double c = dot(p, y) / yy;
  Vec resid = p;
  axpy(resid, -c, y);
  if (norm2(resid) > 1e-10) return std::nullopt;

  AdaGradVariantFixedPoint out;
  const double nrm = norm2(dir);
  out.direction = scaled(dir, 1.0 / nrm);
  out.c = c;
  return out;
}

// Relative distance of v from the line spanned by unit vector u.
inline double collinearity_error(const Vec& v, const Vec& u) {
  const double nv = norm2(v);
  if (nv == 0.0) return 0.0;
  Vec rej = v;
  axpy(rej, -dot(v, u), u);
  return norm2(rej) / nv;
}

}  // namespace specdyn
