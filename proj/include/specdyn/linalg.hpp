#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "specdyn/errors.hpp"

namespace specdyn {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles. Desk-scale only; no views, no sparsity.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), a_(rows * cols, fill) {}

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  double& operator()(std::size_t i, std::size_t j) { return a_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a_[i * cols_ + j]; }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return a_.empty(); }

  double* data() { return a_.data(); }
  const double* data() const { return a_.data(); }

  bool operator==(const Mat& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vec a_;
};

inline bool is_finite(double x) { return std::isfinite(x); }

inline bool is_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline bool is_finite(const Mat& m) {
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      if (!std::isfinite(m(i, j))) return false;
  return true;
}

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const Vec& v) { return std::sqrt(dot(v, v)); }

inline double norm_inf(const Vec& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline Vec add(const Vec& a, const Vec& b) {
  Vec r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
  return r;
}

inline Vec sub(const Vec& a, const Vec& b) {
  Vec r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return r;
}

inline Vec scaled(const Vec& a, double s) {
  Vec r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = s * a[i];
  return r;
}

// a += s * b
inline void axpy(Vec& a, double s, const Vec& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += s * b[i];
}

inline Vec matvec(const Mat& m, const Vec& x) {
  if (m.cols() != x.size()) throw DimensionMismatch("matvec: size mismatch");
  Vec y(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) s += m(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

// y = m^T x
inline Vec tmatvec(const Mat& m, const Vec& x) {
  if (m.rows() != x.size()) throw DimensionMismatch("tmatvec: size mismatch");
  Vec y(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double xi = x[i];
    for (std::size_t j = 0; j < m.cols(); ++j) y[j] += m(i, j) * xi;
  }
  return y;
}

inline Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) throw DimensionMismatch("matmul: size mismatch");
  Mat c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

inline Mat transpose(const Mat& m) {
  Mat t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

inline double max_abs(const Mat& m) {
  double r = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) r = std::max(r, std::abs(m(i, j)));
  return r;
}

inline double max_asymmetry(const Mat& m) {
  double r = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = i + 1; j < m.cols(); ++j)
      r = std::max(r, std::abs(m(i, j) - m(j, i)));
  return r;
}

inline void symmetrize(Mat& m) {
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = i + 1; j < m.cols(); ++j) {
      const double v = 0.5 * (m(i, j) + m(j, i));
      m(i, j) = v;
      m(j, i) = v;
    }
}

struct SymmetricEigen {
  Vec values;  // sorted descending
  Mat vectors; // columns, matching order: a = vectors * diag(values) * vectors^T
};

// Cyclic Jacobi eigensolver for symmetric matrices. `warm_start`, when
// non-empty, must be orthogonal; it is used as the initial rotation so that
// slowly varying matrices re-diagonalize in one or two sweeps.
inline SymmetricEigen eigh(const Mat& a_in, const Mat* warm_start = nullptr) {
  const std::size_t n = a_in.rows();
  if (n != a_in.cols()) throw DimensionMismatch("eigh: matrix not square");
  Mat a = a_in;
  symmetrize(a);
  Mat v = Mat::identity(n);
  if (warm_start && warm_start->rows() == n && warm_start->cols() == n) {
    v = *warm_start;
    a = matmul(transpose(v), matmul(a, v));
    symmetrize(a);
  }

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) total += a(i, j) * a(i, j);
  const double stop = 1e-30 * std::max(total, 1e-300);

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += 2.0 * a(i, j) * a(i, j);
    if (off <= stop) break;

    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p), aqq = a(q, q);
        if (std::abs(apq) <= 1e-17 * (std::abs(app) + std::abs(aqq))) {
          a(p, q) = a(q, p) = 0.0;
          continue;
        }
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(1.0 + theta * theta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;

        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

  SymmetricEigen out;
  out.values.resize(n);
  out.vectors = Mat(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = a(order[j], order[j]);
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = v(i, order[j]);
  }
  return out;
}

// Largest singular value, computed from the Gram matrix of the smaller side.
inline double spectral_norm(const Mat& m) {
  if (m.rows() == 0 || m.cols() == 0) return 0.0;
  const bool wide = m.cols() >= m.rows();
  const std::size_t k = wide ? m.rows() : m.cols();
  Mat g(k, k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i; j < k; ++j) {
      double s = 0.0;
      if (wide) {
        for (std::size_t l = 0; l < m.cols(); ++l) s += m(i, l) * m(j, l);
      } else {
        for (std::size_t l = 0; l < m.rows(); ++l) s += m(l, i) * m(l, j);
      }
      g(i, j) = g(j, i) = s;
    }
  }
  const SymmetricEigen e = eigh(g);
  return std::sqrt(std::max(0.0, e.values.empty() ? 0.0 : e.values.front()));
}

}  // namespace specdyn
