#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>

#include "specdyn/errors.hpp"
#include "specdyn/linalg.hpp"
#include "specdyn/spectral.hpp"

namespace specdyn {

enum class PrecondFamily {
  Identity,
  DiagAdaGrad,
  DiagAdaGradSquared,
  SpanProjectedDiagAdaGrad,
  FullMatrixAdaGrad,
  RidgeInverse,
  RMSProp,
  Adam,
};

inline const char* family_name(PrecondFamily f) {
  switch (f) {
    case PrecondFamily::Identity: return "identity";
    case PrecondFamily::DiagAdaGrad: return "diag_adagrad";
    case PrecondFamily::DiagAdaGradSquared: return "diag_adagrad_squared";
    case PrecondFamily::SpanProjectedDiagAdaGrad: return "span_projected_diag_adagrad";
    case PrecondFamily::FullMatrixAdaGrad: return "full_matrix_adagrad";
    case PrecondFamily::RidgeInverse: return "ridge_inverse";
    case PrecondFamily::RMSProp: return "rmsprop";
    case PrecondFamily::Adam: return "adam";
  }
  return "unknown";
}

inline PrecondFamily family_from_name(const std::string& s) {
  for (PrecondFamily f :
       {PrecondFamily::Identity, PrecondFamily::DiagAdaGrad,
        PrecondFamily::DiagAdaGradSquared, PrecondFamily::SpanProjectedDiagAdaGrad,
        PrecondFamily::FullMatrixAdaGrad, PrecondFamily::RidgeInverse,
        PrecondFamily::RMSProp, PrecondFamily::Adam}) {
    if (s == family_name(f)) return f;
  }
  throw ConfigError("unknown preconditioner family: " + s);
}

struct PrecondConfig {
  PrecondFamily family = PrecondFamily::Identity;
  double epsilon = 1e-8;
  // Number of most recent gradients in the accumulator window; nullopt sums
  // the whole history.
  std::optional<std::size_t> window = 10;
  // Diagonal-AdaGrad denominator: sqrt(S) + eps when true, S + eps when false.
  bool take_sqrt = true;
  double rho = 0.9;    // RMSProp decay
  double beta1 = 0.9;  // Adam first moment
  double beta2 = 0.999;

  void validate() const {
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (window && *window < 1) throw ConfigError("window must be >= 1");
    if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("rho must lie in (0,1)");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
      throw ConfigError("Adam betas must lie in (0,1)");
  }

  std::string to_kv() const {
    std::ostringstream os;
    os.precision(17);
    os << "family=" << family_name(family) << "\n";
    os << "epsilon=" << epsilon << "\n";
    os << "window=";
    if (window) os << *window; else os << "unbounded";
    os << "\n";
    os << "take_sqrt=" << (take_sqrt ? "true" : "false") << "\n";
    os << "rho=" << rho << "\n";
    os << "beta1=" << beta1 << "\n";
    os << "beta2=" << beta2 << "\n";
    return os.str();
  }

  static PrecondConfig from_kv(const std::string& text) {
    PrecondConfig cfg;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty() || line[0] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("bad key=value line: " + line);
      const std::string key = line.substr(0, eq);
      const std::string val = line.substr(eq + 1);
      if (key == "family") cfg.family = family_from_name(val);
      else if (key == "epsilon") cfg.epsilon = std::stod(val);
      else if (key == "window")
        cfg.window = (val == "unbounded")
                         ? std::optional<std::size_t>{}
                         : std::optional<std::size_t>{std::stoul(val)};
      else if (key == "take_sqrt") cfg.take_sqrt = (val == "true" || val == "1");
      else if (key == "rho") cfg.rho = std::stod(val);
      else if (key == "beta1") cfg.beta1 = std::stod(val);
      else if (key == "beta2") cfg.beta2 = std::stod(val);
      else throw ConfigError("unknown preconditioner key: " + key);
    }
    cfg.validate();
    return cfg;
  }
};

// A positive definite preconditioner in one of four storage forms. The two
// spectral forms carry their zero coupling blocks exactly, which a dense
// round trip through the original basis could not.
struct Precond {
  enum class Kind { Diagonal, Dense, SpectralDiag, SpectralBlockDiag };

  Kind kind = Kind::Diagonal;
  Vec diag;       // Diagonal (original basis) or SpectralDiag (spectral basis)
  Mat dense;      // Dense: d x d in the original basis
  Mat in_block;   // SpectralBlockDiag: R x R in-span block; out block is I
  std::shared_ptr<const SpectralDecomposition> basis;  // spectral kinds only

  static Precond identity(std::size_t d) {
    Precond p;
    p.kind = Kind::Diagonal;
    p.diag.assign(d, 1.0);
    return p;
  }
  static Precond diagonal(Vec v) {
    Precond p;
    p.kind = Kind::Diagonal;
    p.diag = std::move(v);
    return p;
  }
  static Precond dense_matrix(Mat m) {
    Precond p;
    p.kind = Kind::Dense;
    p.dense = std::move(m);
    return p;
  }
  static Precond spectral_diagonal(Vec v, std::shared_ptr<const SpectralDecomposition> b) {
    Precond p;
    p.kind = Kind::SpectralDiag;
    p.diag = std::move(v);
    p.basis = std::move(b);
    return p;
  }
  static Precond spectral_block(Mat in, std::shared_ptr<const SpectralDecomposition> b) {
    Precond p;
    p.kind = Kind::SpectralBlockDiag;
    p.in_block = std::move(in);
    p.basis = std::move(b);
    return p;
  }

  std::size_t dim() const {
    switch (kind) {
      case Kind::Diagonal: return diag.size();
      case Kind::Dense: return dense.rows();
      case Kind::SpectralDiag: return diag.size();
      case Kind::SpectralBlockDiag: return basis ? basis->d() : 0;
    }
    return 0;
  }

  Vec apply(const Vec& g) const {
    switch (kind) {
      case Kind::Diagonal: {
        Vec r(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) r[i] = diag[i] * g[i];
        return r;
      }
      case Kind::Dense:
        return matvec(dense, g);
      case Kind::SpectralDiag: {
        Vec gt = tmatvec(basis->right_basis, g);
        for (std::size_t i = 0; i < gt.size(); ++i) gt[i] *= diag[i];
        return matvec(basis->right_basis, gt);
      }
      case Kind::SpectralBlockDiag: {
        Vec gt = tmatvec(basis->right_basis, g);
        const std::size_t r = basis->rank;
        Vec top(gt.begin(), gt.begin() + r);
        Vec mixed = matvec(in_block, top);
        for (std::size_t i = 0; i < r; ++i) gt[i] = mixed[i];
        // out-of-span block is the identity
        return matvec(basis->right_basis, gt);
      }
    }
    return g;
  }

  // Dense matrix in the original basis.
  Mat to_dense() const {
    switch (kind) {
      case Kind::Diagonal: {
        Mat m(diag.size(), diag.size());
        for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
        return m;
      }
      case Kind::Dense:
        return dense;
      case Kind::SpectralDiag: {
        Mat m(diag.size(), diag.size());
        for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
        Mat out = matmul(basis->right_basis, matmul(m, transpose(basis->right_basis)));
        symmetrize(out);
        return out;
      }
      case Kind::SpectralBlockDiag: {
        const std::size_t d = basis->d();
        const std::size_t r = basis->rank;
        Mat blocks(d, d);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < r; ++j) blocks(i, j) = in_block(i, j);
        for (std::size_t i = r; i < d; ++i) blocks(i, i) = 1.0;
        Mat out = matmul(basis->right_basis, matmul(blocks, transpose(basis->right_basis)));
        symmetrize(out);
        return out;
      }
    }
    return {};
  }

  double max_eigenvalue() const {
    switch (kind) {
      case Kind::Diagonal:
      case Kind::SpectralDiag: {
        double m = 0.0;
        for (double v : diag) m = std::max(m, v);
        return m;
      }
      case Kind::Dense:
        return eigh(dense).values.front();
      case Kind::SpectralBlockDiag: {
        const double in = in_block.rows() ? eigh(in_block).values.front() : 0.0;
        const bool has_out = basis->rank < basis->d();
        return std::max(in, has_out ? 1.0 : 0.0);
      }
    }
    return 0.0;
  }
};

// Spectral form of a preconditioner. For the spectral storage kinds the
// coupling block is exactly zero by construction.
inline SpectralPreconditioner precond_to_spectral(const SpectralDecomposition& decomp,
                                                  const Precond& p) {
  const std::size_t d = decomp.d();
  switch (p.kind) {
    case Precond::Kind::SpectralDiag: {
      Mat m(d, d);
      for (std::size_t i = 0; i < d; ++i) m(i, i) = p.diag[i];
      return SpectralPreconditioner(std::move(m), decomp.rank);
    }
    case Precond::Kind::SpectralBlockDiag: {
      const std::size_t r = decomp.rank;
      Mat m(d, d);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j) m(i, j) = p.in_block(i, j);
      for (std::size_t i = r; i < d; ++i) m(i, i) = 1.0;
      return SpectralPreconditioner(std::move(m), decomp.rank);
    }
    default:
      return precond_to_spectral(decomp, p.to_dense());
  }
}

// Evolving preconditioner state: maps the gradient history to D(t).
class PrecondState {
 public:
  explicit PrecondState(PrecondConfig cfg,
                        std::shared_ptr<const SpectralDecomposition> decomp = nullptr)
      : cfg_(cfg), decomp_(std::move(decomp)) {
    cfg_.validate();
    const bool needs_basis = cfg_.family == PrecondFamily::SpanProjectedDiagAdaGrad ||
                             cfg_.family == PrecondFamily::RidgeInverse;
    if (needs_basis && !decomp_)
      throw MissingDecomposition(std::string(family_name(cfg_.family)) +
                                 " requires a spectral decomposition");
  }

  const PrecondConfig& config() const { return cfg_; }
  std::size_t step() const { return t_; }

  struct Step {
    Precond d;      // the emitted preconditioner D(t)
    Vec direction;  // what the update subtracts (times eta): D*grad, or
                    // D*m_hat for Adam
  };

  Step advance(const Vec& gradient) {
    if (!is_finite(gradient))
      throw NonFiniteGradient("advance: gradient has NaN/Inf entries");
    if (dim_ == 0) {
      dim_ = gradient.size();
      if (decomp_ && decomp_->d() != dim_)
        throw DimensionMismatch("advance: decomposition does not match gradient");
    }
    if (gradient.size() != dim_)
      throw DimensionMismatch("advance: gradient dimension changed");

    Step out;
    switch (cfg_.family) {
      case PrecondFamily::Identity:
        out.d = Precond::identity(dim_);
        out.direction = gradient;
        break;
      case PrecondFamily::DiagAdaGrad: {
        accumulate_square(gradient);
        Vec dvec(dim_);
        for (std::size_t i = 0; i < dim_; ++i) {
          const double s = std::max(0.0, sum_sq_[i]);
          const double denom = cfg_.take_sqrt ? std::sqrt(s) + cfg_.epsilon
                                              : s + cfg_.epsilon;
          dvec[i] = 1.0 / denom;
        }
        out.d = Precond::diagonal(std::move(dvec));
        out.direction = out.d.apply(gradient);
        break;
      }
      case PrecondFamily::DiagAdaGradSquared: {
        accumulate_square(gradient);
        Vec dvec(dim_);
        for (std::size_t i = 0; i < dim_; ++i) {
          const double s = std::max(0.0, sum_sq_[i]);
          dvec[i] = 1.0 / (s * s + cfg_.epsilon);
        }
        out.d = Precond::diagonal(std::move(dvec));
        out.direction = out.d.apply(gradient);
        break;
      }
      case PrecondFamily::SpanProjectedDiagAdaGrad: {
        accumulate_square(gradient);
        const std::size_t r = decomp_->rank;
        Vec dvec(dim_);
        for (std::size_t i = 0; i < dim_; ++i) {
          const double s = std::max(0.0, sum_sq_[i]);
          const double denom = cfg_.take_sqrt ? std::sqrt(s) + cfg_.epsilon
                                              : s + cfg_.epsilon;
          dvec[i] = 1.0 / denom;
        }
        // in-span block of V^T diag(dvec) V
        Mat in(r, r);
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = i; j < r; ++j) {
            double s = 0.0;
            for (std::size_t l = 0; l < dim_; ++l)
              s += decomp_->right_basis(l, i) * dvec[l] * decomp_->right_basis(l, j);
            in(i, j) = in(j, i) = s;
          }
        }
        out.d = Precond::spectral_block(std::move(in), decomp_);
        out.direction = out.d.apply(gradient);
        break;
      }
      case PrecondFamily::FullMatrixAdaGrad: {
        accumulate_outer(gradient);
        Mat g = sum_outer_;
        SymmetricEigen e = eigh(g, warm_.empty() ? nullptr : &warm_);
        warm_ = e.vectors;
        Vec inv_sqrt(dim_);
        for (std::size_t i = 0; i < dim_; ++i)
          inv_sqrt[i] = 1.0 / std::sqrt(std::max(0.0, e.values[i]) + cfg_.epsilon);
        Mat d(dim_, dim_);
        for (std::size_t i = 0; i < dim_; ++i)
          for (std::size_t j = i; j < dim_; ++j) {
            double s = 0.0;
            for (std::size_t l = 0; l < dim_; ++l)
              s += e.vectors(i, l) * inv_sqrt[l] * e.vectors(j, l);
            d(i, j) = d(j, i) = s;
          }
        out.d = Precond::dense_matrix(std::move(d));
        out.direction = out.d.apply(gradient);
        break;
      }
      case PrecondFamily::RidgeInverse: {
        if (!ridge_) {
          Vec dvec(dim_);
          for (std::size_t i = 0; i < dim_; ++i) {
            const double s = decomp_->sigma(i);
            dvec[i] = 1.0 / (s * s + cfg_.epsilon);
          }
          ridge_ = Precond::spectral_diagonal(std::move(dvec), decomp_);
        }
        out.d = *ridge_;
        out.direction = out.d.apply(gradient);
        break;
      }
      case PrecondFamily::RMSProp: {
        if (ema_sq_.empty()) ema_sq_.assign(dim_, 0.0);
        for (std::size_t i = 0; i < dim_; ++i)
          ema_sq_[i] = cfg_.rho * ema_sq_[i] +
                       (1.0 - cfg_.rho) * gradient[i] * gradient[i];
        Vec dvec(dim_);
        for (std::size_t i = 0; i < dim_; ++i)
          dvec[i] = 1.0 / (std::sqrt(std::max(0.0, ema_sq_[i])) + cfg_.epsilon);
        out.d = Precond::diagonal(std::move(dvec));
        out.direction = out.d.apply(gradient);
        break;
      }
      case PrecondFamily::Adam: {
        if (m_.empty()) {
          m_.assign(dim_, 0.0);
          v_.assign(dim_, 0.0);
        }
        const double b1 = cfg_.beta1, b2 = cfg_.beta2;
        for (std::size_t i = 0; i < dim_; ++i) {
          m_[i] = b1 * m_[i] + (1.0 - b1) * gradient[i];
          v_[i] = b2 * v_[i] + (1.0 - b2) * gradient[i] * gradient[i];
        }
        const double t = static_cast<double>(t_ + 1);
        const double corr1 = 1.0 - std::pow(b1, t);
        const double corr2 = 1.0 - std::pow(b2, t);
        Vec dvec(dim_), dir(dim_);
        for (std::size_t i = 0; i < dim_; ++i) {
          const double vhat = v_[i] / corr2;
          dvec[i] = 1.0 / (std::sqrt(std::max(0.0, vhat)) + cfg_.epsilon);
          dir[i] = dvec[i] * (m_[i] / corr1);
        }
        out.d = Precond::diagonal(std::move(dvec));
        out.direction = std::move(dir);
        break;
      }
    }
    ++t_;
    return out;
  }

  // Brute-force recomputation of the windowed square accumulator; only valid
  // for bounded windows (used by tests to validate the incremental update).
  Vec recompute_sum_sq() const {
    Vec s(dim_, 0.0);
    for (const Vec& g : window_)
      for (std::size_t i = 0; i < dim_; ++i) s[i] += g[i] * g[i];
    return s;
  }
  const Vec& sum_sq() const { return sum_sq_; }

 private:
  void accumulate_square(const Vec& g) {
    if (sum_sq_.empty()) sum_sq_.assign(dim_, 0.0);
    for (std::size_t i = 0; i < dim_; ++i) sum_sq_[i] += g[i] * g[i];
    if (cfg_.window) {
      window_.push_back(g);
      if (window_.size() > *cfg_.window) {
        const Vec& old = window_.front();
        for (std::size_t i = 0; i < dim_; ++i) {
          sum_sq_[i] -= old[i] * old[i];
          if (sum_sq_[i] < 0.0) sum_sq_[i] = 0.0;
        }
        window_.pop_front();
      }
    }
  }

  void accumulate_outer(const Vec& g) {
    if (sum_outer_.empty()) sum_outer_ = Mat(dim_, dim_);
    for (std::size_t i = 0; i < dim_; ++i)
      for (std::size_t j = 0; j < dim_; ++j) sum_outer_(i, j) += g[i] * g[j];
    if (cfg_.window) {
      window_.push_back(g);
      if (window_.size() > *cfg_.window) {
        const Vec& old = window_.front();
        for (std::size_t i = 0; i < dim_; ++i)
          for (std::size_t j = 0; j < dim_; ++j) sum_outer_(i, j) -= old[i] * old[j];
        window_.pop_front();
      }
    }
  }

  PrecondConfig cfg_;
  std::shared_ptr<const SpectralDecomposition> decomp_;
  std::size_t dim_ = 0;
  std::size_t t_ = 0;
  std::deque<Vec> window_;
  Vec sum_sq_;
  Mat sum_outer_;
  Mat warm_;
  Vec ema_sq_;
  Vec m_, v_;
  std::optional<Precond> ridge_;
};

// Families whose preconditioners never couple the data span with its
// complement (zero coupling block for every t).
inline bool is_in_span_family(const PrecondConfig& cfg,
                              const SpectralDecomposition& /*decomp*/) {
  return cfg.family == PrecondFamily::Identity ||
         cfg.family == PrecondFamily::RidgeInverse ||
         cfg.family == PrecondFamily::SpanProjectedDiagAdaGrad;
}

// Hard upper bound on sup_t lambda_max(D(t)) implied by the epsilon floor;
// exact for Identity and RidgeInverse.
inline double sup_max_eigenvalue_bound(const PrecondConfig& cfg) {
  switch (cfg.family) {
    case PrecondFamily::Identity:
      return 1.0;
    case PrecondFamily::FullMatrixAdaGrad:
      return 1.0 / std::sqrt(cfg.epsilon);
    case PrecondFamily::SpanProjectedDiagAdaGrad:
      return std::max(1.0, 1.0 / cfg.epsilon);
    default:
      return 1.0 / cfg.epsilon;
  }
}

}  // namespace specdyn
