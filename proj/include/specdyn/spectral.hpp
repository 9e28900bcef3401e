#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "specdyn/errors.hpp"
#include "specdyn/linalg.hpp"

namespace specdyn {

// Full SVD of a data matrix with both bases completed to square orthogonal
// matrices: x = left_basis * Sigma * right_basis^T, where Sigma embeds
// singular_values on the diagonal. Columns of right_basis past `rank` span
// the orthogonal complement of the row space.
struct SpectralDecomposition {
  Mat left_basis;        // n x n
  Mat right_basis;       // d x d
  Vec singular_values;   // length min(n, d), sorted descending
  std::size_t rank = 0;
  double rank_tolerance = 0.0;

  std::size_t n() const { return left_basis.rows(); }
  std::size_t d() const { return right_basis.rows(); }
  bool over_parameterized() const { return rank < d(); }
  double sigma_max() const {
    return singular_values.empty() ? 0.0 : singular_values.front();
  }
  // Singular value padded with zeros past min(n, d).
  double sigma(std::size_t r) const {
    return r < singular_values.size() ? singular_values[r] : 0.0;
  }
};

// A vector expressed in the right singular basis, split at the rank index.
class SpectralVector {
 public:
  SpectralVector() = default;
  SpectralVector(Vec full, std::size_t rank) : full_(std::move(full)), rank_(rank) {
    if (rank_ > full_.size())
      throw DimensionMismatch("SpectralVector: rank exceeds dimension");
  }

  const Vec& full() const { return full_; }
  std::size_t rank() const { return rank_; }
  std::span<const double> in_span() const {
    return {full_.data(), rank_};
  }
  std::span<const double> out_span() const {
    return {full_.data() + rank_, full_.size() - rank_};
  }
  Vec in_span_vec() const { return Vec(full_.begin(), full_.begin() + rank_); }
  Vec out_span_vec() const { return Vec(full_.begin() + rank_, full_.end()); }

 private:
  Vec full_;
  std::size_t rank_ = 0;
};

// A symmetric preconditioner expressed in the right singular basis, with the
// 2x2 block tiling at the rank index.
class SpectralPreconditioner {
 public:
  SpectralPreconditioner() = default;
  SpectralPreconditioner(Mat full, std::size_t rank)
      : full_(std::move(full)), rank_(rank) {
    if (full_.rows() != full_.cols())
      throw DimensionMismatch("SpectralPreconditioner: matrix not square");
    if (rank_ > full_.rows())
      throw DimensionMismatch("SpectralPreconditioner: rank exceeds dimension");
  }

  const Mat& full() const { return full_; }
  std::size_t rank() const { return rank_; }

  // Top-left R x R block acting inside the data span.
  Mat in_span_block() const {
    Mat b(rank_, rank_);
    for (std::size_t i = 0; i < rank_; ++i)
      for (std::size_t j = 0; j < rank_; ++j) b(i, j) = full_(i, j);
    return b;
  }
  // Bottom-left (d-R) x R block coupling the span into its complement.
  Mat coupling_block() const {
    const std::size_t m = full_.rows() - rank_;
    Mat b(m, rank_);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < rank_; ++j) b(i, j) = full_(rank_ + i, j);
    return b;
  }
  // Bottom-right (d-R) x (d-R) block acting outside the span.
  Mat out_span_block() const {
    const std::size_t m = full_.rows() - rank_;
    Mat b(m, m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) b(i, j) = full_(rank_ + i, rank_ + j);
    return b;
  }
  double coupling_norm() const { return spectral_norm(coupling_block()); }

 private:
  Mat full_;
  std::size_t rank_ = 0;
};

namespace detail {

// One-sided Jacobi orthogonalization of the columns of `b` (m x k, m >= k).
// On return, work holds b * rot with mutually orthogonal columns and rot is
// the accumulated k x k rotation.
inline void one_sided_jacobi(Mat& work, Mat& rot) {
  const std::size_t m = work.rows();
  const std::size_t k = work.cols();
  rot = Mat::identity(k);
  const double tol = 1e-15;

  for (int sweep = 0; sweep < 60; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < k; ++p) {
      for (std::size_t q = p + 1; q < k; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double wp = work(i, p), wq = work(i, q);
          alpha += wp * wp;
          beta += wq * wq;
          gamma += wp * wq;
        }
        if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta))
          continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double wp = work(i, p), wq = work(i, q);
          work(i, p) = c * wp - s * wq;
          work(i, q) = s * wp + c * wq;
        }
        for (std::size_t i = 0; i < k; ++i) {
          const double rp = rot(i, p), rq = rot(i, q);
          rot(i, p) = c * rp - s * rq;
          rot(i, q) = s * rp + c * rq;
        }
      }
    }
    if (!rotated) break;
  }
}

// Fill the columns of q marked in `needs_fill` with an orthonormal complement
// of the remaining columns, scanning standard basis vectors in order.
inline void complete_basis(Mat& q, const std::vector<bool>& needs_fill) {
  const std::size_t m = q.rows();
  std::vector<std::size_t> fill;
  for (std::size_t j = 0; j < q.cols(); ++j)
    if (needs_fill[j]) fill.push_back(j);
  if (fill.empty()) return;

  std::vector<std::size_t> kept;
  for (std::size_t j = 0; j < q.cols(); ++j)
    if (!needs_fill[j]) kept.push_back(j);

  auto project_out = [&](Vec& v) {
    for (std::size_t j : kept) {
      double c = 0.0;
      for (std::size_t i = 0; i < m; ++i) c += q(i, j) * v[i];
      for (std::size_t i = 0; i < m; ++i) v[i] -= c * q(i, j);
    }
  };

  std::size_t next = 0;
  std::size_t candidate = 0;
  while (next < fill.size() && candidate < m) {
    Vec v(m, 0.0);
    v[candidate++] = 1.0;
    project_out(v);
    const double nrm = norm2(v);
    if (nrm < 1e-2) continue;
    project_out(v);  // second pass restores orthogonality to machine precision
    const double nrm2v = norm2(v);
    for (std::size_t i = 0; i < m; ++i) q(i, fill[next]) = v[i] / nrm2v;
    kept.push_back(fill[next]);
    ++next;
  }
  // Fallback when the quick scan ran out of easy candidates: take the basis
  // vector with the largest residual each time.
  while (next < fill.size()) {
    Vec best;
    double best_nrm = -1.0;
    for (std::size_t c = 0; c < m; ++c) {
      Vec v(m, 0.0);
      v[c] = 1.0;
      project_out(v);
      const double nrm = norm2(v);
      if (nrm > best_nrm) {
        best_nrm = nrm;
        best = std::move(v);
      }
    }
    project_out(best);
    const double nrm = norm2(best);
    for (std::size_t i = 0; i < m; ++i) q(i, fill[next]) = best[i] / nrm;
    kept.push_back(fill[next]);
    ++next;
  }
}

inline void flip_column_sign(Mat& m, std::size_t j) {
  for (std::size_t i = 0; i < m.rows(); ++i) m(i, j) = -m(i, j);
}

// First entry of column j whose magnitude exceeds the threshold; m.rows() if none.
inline std::size_t first_significant(const Mat& m, std::size_t j, double thresh) {
  for (std::size_t i = 0; i < m.rows(); ++i)
    if (std::abs(m(i, j)) > thresh) return i;
  return m.rows();
}

}  // namespace detail

inline double default_rank_tolerance(double sigma_max, std::size_t n, std::size_t d) {
  return 1e-10 * sigma_max * static_cast<double>(std::max(n, d));
}

// Full SVD with completed bases. Pass rank_tolerance < 0 to use the default
// 1e-10 * sigma_max * max(n, d). Column signs are normalized so the first
// significant entry of every right-basis column is positive.
inline SpectralDecomposition decompose(const Mat& x, double rank_tolerance = -1.0) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  if (n == 0 || d == 0) throw DimensionMismatch("decompose: empty matrix");
  if (!is_finite(x)) throw NonFinite("decompose: matrix has NaN/Inf entries");

  // Orthogonalize the columns of the tall side.
  const bool transposed = n < d;  // over-parameterized orientation
  Mat work = transposed ? transpose(x) : x;
  const std::size_t m = work.rows();
  const std::size_t k = work.cols();
  Mat rot;
  detail::one_sided_jacobi(work, rot);

  Vec sigma(k);
  for (std::size_t j = 0; j < k; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += work(i, j) * work(i, j);
    sigma[j] = std::sqrt(s);
  }

  std::vector<std::size_t> order(k);
  for (std::size_t j = 0; j < k; ++j) order[j] = j;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });

  Vec sorted_sigma(k);
  Mat tall(m, m);  // completed basis of the tall side
  Mat small(k, k);
  std::vector<bool> needs_fill(m, true);
  const double sig_max = sigma[order[0]];
  const double keep_tol = sig_max * 1e-15 * std::sqrt(static_cast<double>(m));
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t src = order[j];
    sorted_sigma[j] = sigma[src];
    for (std::size_t i = 0; i < k; ++i) small(i, j) = rot(i, src);
    if (sigma[src] > keep_tol) {
      for (std::size_t i = 0; i < m; ++i) tall(i, j) = work(i, src) / sigma[src];
      needs_fill[j] = false;
    }
  }
  detail::complete_basis(tall, needs_fill);

  SpectralDecomposition out;
  out.singular_values = std::move(sorted_sigma);
  if (transposed) {
    out.left_basis = std::move(small);
    out.right_basis = std::move(tall);
  } else {
    out.left_basis = std::move(tall);
    out.right_basis = std::move(small);
  }

  out.rank_tolerance = rank_tolerance >= 0.0
                           ? rank_tolerance
                           : default_rank_tolerance(out.sigma_max(), n, d);
  std::size_t r = 0;
  while (r < out.singular_values.size() &&
         out.singular_values[r] > out.rank_tolerance)
    ++r;
  out.rank = r;
  if (out.rank == 0)
    throw AllZeroMatrix("decompose: every singular value is below the rank tolerance");

  // Sign convention: first significant entry of each right-basis column made
  // positive; the paired left column flips with it to keep the product intact.
  for (std::size_t j = 0; j < d; ++j) {
    const std::size_t lead = detail::first_significant(out.right_basis, j, 1e-12);
    if (lead < d && out.right_basis(lead, j) < 0.0) {
      detail::flip_column_sign(out.right_basis, j);
      if (j < std::min(n, d)) detail::flip_column_sign(out.left_basis, j);
    }
  }
  for (std::size_t j = std::min(n, d); j < n; ++j) {
    const std::size_t lead = detail::first_significant(out.left_basis, j, 1e-12);
    if (lead < n && out.left_basis(lead, j) < 0.0)
      detail::flip_column_sign(out.left_basis, j);
  }
  return out;
}

inline SpectralVector to_spectral(const SpectralDecomposition& decomp, const Vec& w) {
  if (w.size() != decomp.d())
    throw DimensionMismatch("to_spectral: vector length does not match d");
  return SpectralVector(tmatvec(decomp.right_basis, w), decomp.rank);
}

inline Vec from_spectral(const SpectralDecomposition& decomp, const SpectralVector& w) {
  if (w.full().size() != decomp.d())
    throw DimensionMismatch("from_spectral: vector length does not match d");
  return matvec(decomp.right_basis, w.full());
}

inline SpectralPreconditioner precond_to_spectral(const SpectralDecomposition& decomp,
                                                  const Mat& dmat) {
  if (dmat.rows() != decomp.d() || dmat.cols() != decomp.d())
    throw DimensionMismatch("precond_to_spectral: matrix is not d x d");
  const double scale = std::max(1.0, max_abs(dmat));
  if (max_asymmetry(dmat) > 1e-8 * scale)
    throw NotSymmetric("precond_to_spectral: matrix is not symmetric");
  Mat full = matmul(transpose(decomp.right_basis), matmul(dmat, decomp.right_basis));
  symmetrize(full);
  return SpectralPreconditioner(std::move(full), decomp.rank);
}

// Projection of a preconditioner onto the span of the data: the in-span block
// is kept, the coupling blocks vanish, and the out-of-span block is replaced
// by the identity so the result stays positive definite.
inline Mat project_onto_span(const SpectralDecomposition& decomp, const Mat& dmat) {
  const SpectralPreconditioner sp = precond_to_spectral(decomp, dmat);
  const std::size_t d = decomp.d();
  const std::size_t r = decomp.rank;
  Mat blocks(d, d);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < r; ++j) blocks(i, j) = sp.full()(i, j);
  for (std::size_t i = r; i < d; ++i) blocks(i, i) = 1.0;
  Mat out = matmul(decomp.right_basis, matmul(blocks, transpose(decomp.right_basis)));
  symmetrize(out);
  return out;
}

inline Vec min_norm_solution(const SpectralDecomposition& decomp, const Vec& y) {
  if (y.size() != decomp.n())
    throw DimensionMismatch("min_norm_solution: label length does not match n");
  if (!is_finite(y)) throw NonFinite("min_norm_solution: labels have NaN/Inf entries");
  Vec w(decomp.d(), 0.0);
  for (std::size_t r = 0; r < decomp.rank; ++r) {
    double c = 0.0;
    for (std::size_t i = 0; i < decomp.n(); ++i) c += decomp.left_basis(i, r) * y[i];
    c /= decomp.singular_values[r];
    for (std::size_t j = 0; j < decomp.d(); ++j)
      w[j] += c * decomp.right_basis(j, r);
  }
  return w;
}

// Minimum-norm least-squares solution X^T (X X^T)^+ y via the SVD.
inline Vec min_norm_solution(const Mat& x, const Vec& y) {
  if (!is_finite(x)) throw NonFinite("min_norm_solution: matrix has NaN/Inf entries");
  return min_norm_solution(decompose(x), y);
}

}  // namespace specdyn
