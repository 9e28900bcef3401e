#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "specdyn/dynamics.hpp"
#include "specdyn/errors.hpp"
#include "specdyn/linalg.hpp"
#include "specdyn/precond.hpp"
#include "specdyn/rng.hpp"

namespace specdyn {

namespace detail {

inline void parallel_for(std::size_t count, std::size_t jobs,
                         const std::function<void(std::size_t)>& body) {
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  if (jobs <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Data generators
// ---------------------------------------------------------------------------

struct GaussianRegressionSpec {
  std::size_t n = 10;
  std::size_t d = 50;
  double noise_scale = 1.0;
  std::uint64_t seed = 0;

  bool over_parameterized() const { return d > n; }
};

// i.i.d. standard-normal X, w_star and noise (noise scaled); draw order is
// X row-major, then w_star, then zeta, all from SplitMix64(seed).
inline RegressionProblem gen_gaussian_regression(const GaussianRegressionSpec& spec,
                                                 double lambda = 0.0) {
  if (spec.n < 1 || spec.d < 1)
    throw ConfigError("gen_gaussian_regression: n and d must be >= 1");
  SplitMix64 rng(spec.seed);
  Mat x = rng.gaussian_mat(spec.n, spec.d);
  Vec w_star = rng.gaussian_vec(spec.d);
  Vec zeta = rng.gaussian_vec(spec.n, spec.noise_scale);
  return make_problem(std::move(x), std::move(w_star), std::move(zeta), lambda);
}

struct MarginClassificationSpec {
  std::size_t n = 50;
  double level = 1.0 / 32.0;        // margin parameter in (0,1)
  double positive_prob = 7.0 / 8.0; // P(label = +level)
  std::uint64_t seed = 0;

  std::size_t d() const { return 6 * n; }
};

struct MarginDataset {
  Mat x;  // n x 6n
  Vec y;  // entries in {+level, -level}
  double level = 0.0;
};

// Row i of the two-class construction: label value at feature 1, ones at
// features 2 and 3, and a label-dependent indicator block starting at feature
// 4 + 5(i-1) (one slot for the positive class, five for the negative class).
// Indices here are 1-based to match the construction; storage is 0-based.
inline void fill_margin_row(Mat& x, std::size_t i, double label) {
  x(i, 0) = label;
  x(i, 1) = 1.0;
  x(i, 2) = 1.0;
  const std::size_t block = 3 + 5 * i;  // 0-based index of feature 4 + 5(i-1)
  if (label > 0.0) {
    x(i, block) = 1.0;
  } else {
    for (std::size_t j = 0; j < 5; ++j) x(i, block + j) = 1.0;
  }
}

inline MarginDataset gen_margin_classification(const MarginClassificationSpec& spec) {
  if (spec.n < 3)
    throw InstanceTooSmall("gen_margin_classification: need n >= 3");
  if (!(spec.level > 0.0 && spec.level < 1.0))
    throw ConfigError("gen_margin_classification: level must lie in (0,1)");
  if (!(spec.positive_prob > 0.0 && spec.positive_prob < 1.0))
    throw ConfigError("gen_margin_classification: positive_prob must lie in (0,1)");
  SplitMix64 rng(spec.seed);
  MarginDataset out;
  out.level = spec.level;
  out.x = Mat(spec.n, spec.d());
  out.y.resize(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const bool positive = rng.next_unit() <= spec.positive_prob;
    out.y[i] = positive ? spec.level : -spec.level;
    fill_margin_row(out.x, i, out.y[i]);
  }
  return out;
}

// Nearest point of {+level, -level}; ties at zero resolve to +level.
inline double quant(double level, double v) {
  if (!(level > 0.0)) throw ConfigError("quant: level must be positive");
  return v >= 0.0 ? level : -level;
}

enum class DecisionRule { FirstThreeFeatures, FullSignRule };

// Fraction of test labels recovered by the learned weights. The first-three
// rule scores w1*y + w2 + w3 (only those features are shared between train
// and test); the full rule scores x^T w.
inline double evaluate_classifier(const Vec& w, const MarginDataset& testset,
                                  DecisionRule rule, double level) {
  if (rule == DecisionRule::FullSignRule && w.size() != testset.x.cols())
    throw DimensionMismatch("evaluate_classifier: w does not match test dimension");
  if (rule == DecisionRule::FirstThreeFeatures && w.size() < 3)
    throw DimensionMismatch("evaluate_classifier: need at least 3 weights");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < testset.y.size(); ++i) {
    double score = 0.0;
    if (rule == DecisionRule::FirstThreeFeatures) {
      score = w[0] * testset.y[i] + w[1] + w[2];
    } else {
      for (std::size_t j = 0; j < testset.x.cols(); ++j)
        score += testset.x(i, j) * w[j];
    }
    if (quant(level, score) == testset.y[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(testset.y.size());
}

// ---------------------------------------------------------------------------
// Method harness
// ---------------------------------------------------------------------------

struct MethodSpec {
  std::string name;
  PrecondConfig precond;
  double eta = 0.0;       // <= 0 selects the automatic step size
  double momentum = 0.0;  // heavy-ball coefficient; harness option only
};

// 0.9 * max_stable_step with the epsilon-floor bound on sup_t lambda_max(D(t)).
inline double auto_eta(const RegressionProblem& p, const PrecondConfig& cfg) {
  return 0.9 * max_stable_step(*p.decomp, sup_max_eigenvalue_bound(cfg), p.lambda);
}

struct HarnessResult {
  Vec w;                 // final iterate
  double loss = 0.0;     // full objective at the final iterate
  double training_error = 0.0;  // data-fit part 1/2 ||Xw - y||^2
  std::size_t steps_run = 0;
  double eta = 0.0;
};

// Unbiased subset estimate of the full gradient: `batch` rows sampled with
// replacement, scaled by n / batch, plus the regularizer term.
inline Vec minibatch_gradient(const RegressionProblem& p, const Vec& w,
                              std::size_t batch, SplitMix64& rng) {
  if (batch < 1) throw ConfigError("minibatch_gradient: batch must be >= 1");
  Vec g(p.d(), 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t i = rng.next_u64() % p.n();
    double r = -p.y[i];
    for (std::size_t j = 0; j < p.d(); ++j) r += p.x(i, j) * w[j];
    for (std::size_t j = 0; j < p.d(); ++j) g[j] += r * p.x(i, j);
  }
  const double scale = static_cast<double>(p.n()) / static_cast<double>(batch);
  for (double& v : g) v *= scale;
  if (p.lambda != 0.0) axpy(g, p.lambda, w);
  return g;
}

// Lean update loop used by the table harnesses: identical update to run() but
// keeps no per-step history, and adds the two harness-only options, heavy-ball
// momentum and a mini-batch row schedule (batch_size = 0 keeps full batches).
inline HarnessResult harness_run(const RegressionProblem& p, const MethodSpec& m,
                                 const Vec& w0, std::size_t steps,
                                 double early_stop_loss = -1.0,
                                 std::size_t batch_size = 0,
                                 std::uint64_t batch_seed = 0) {
  PrecondState state(m.precond, p.decomp);
  const double eta = m.eta > 0.0 ? m.eta : auto_eta(p, m.precond);
  SplitMix64 batch_rng(batch_seed);
  Vec w = w0;
  Vec w_prev = w0;
  LossGradient lg = loss_and_gradient(p, w);
  std::size_t t = 0;
  for (; t < steps; ++t) {
    const Vec gradient = batch_size > 0
                             ? minibatch_gradient(p, w, batch_size, batch_rng)
                             : lg.gradient;
    PrecondState::Step step = state.advance(gradient);
    Vec w_next = w;
    axpy(w_next, -eta, step.direction);
    if (m.momentum != 0.0) {
      for (std::size_t i = 0; i < w.size(); ++i)
        w_next[i] += m.momentum * (w[i] - w_prev[i]);
    }
    w_prev = std::move(w);
    w = std::move(w_next);
    if (!is_finite(w) || norm2(w) > kDivergenceThreshold)
      throw Diverged(t + 1, m.name);
    lg = loss_and_gradient(p, w);
    if (early_stop_loss >= 0.0 && lg.loss < early_stop_loss) {
      ++t;
      break;
    }
  }
  HarnessResult out;
  Vec residual = matvec(p.x, w);
  for (std::size_t i = 0; i < residual.size(); ++i) residual[i] -= p.y[i];
  out.training_error = 0.5 * dot(residual, residual);
  out.loss = lg.loss;
  out.w = std::move(w);
  out.steps_run = t;
  out.eta = eta;
  return out;
}

// ---------------------------------------------------------------------------
// Table experiments and reports
// ---------------------------------------------------------------------------

enum class Aggregate { Mean, Median };

struct RunRecord {
  std::string method;
  std::uint64_t seed = 0;
  double training_error = std::numeric_limits<double>::quiet_NaN();
  double test_error = std::numeric_limits<double>::quiet_NaN();
  double dist_w_star = std::numeric_limits<double>::quiet_NaN();
  double dist_min_norm = std::numeric_limits<double>::quiet_NaN();
  double accuracy = std::numeric_limits<double>::quiet_NaN();
};

struct ExperimentReport {
  std::vector<RunRecord> rows;
  std::size_t run_count = 0;
  std::vector<std::string> methods;

  std::vector<double> metric(const std::string& method,
                             double RunRecord::* field) const {
    std::vector<double> v;
    for (const RunRecord& r : rows)
      if (r.method == method) v.push_back(r.*field);
    return v;
  }
  double aggregate(const std::string& method, double RunRecord::* field,
                   Aggregate how) const {
    std::vector<double> v = metric(method, field);
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    if (how == Aggregate::Mean) {
      double s = 0.0;
      for (double x : v) s += x;
      return s / static_cast<double>(v.size());
    }
    std::sort(v.begin(), v.end());
    const std::size_t k = v.size();
    return k % 2 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
  }
};

struct TableExperimentConfig {
  GaussianRegressionSpec base;
  double lambda = 0.0;
  std::vector<MethodSpec> methods;
  std::size_t steps = 2000;
  std::size_t runs = 5;
  std::size_t test_size = 10000;
  enum class Init { Zero, Gaussian } init = Init::Zero;
  double early_stop_loss = 1e-24;
  std::size_t batch_size = 0;  // 0 = full batch
  std::size_t jobs = 1;
};

// Mean squared prediction error on a fresh sample of the same distribution,
// generated row by row from the given seed.
inline double gaussian_test_error(const RegressionProblem& p, const Vec& w,
                                  std::size_t test_size, double noise_scale,
                                  std::uint64_t seed) {
  SplitMix64 rng(seed);
  double sum = 0.0;
  Vec row(p.d());
  for (std::size_t i = 0; i < test_size; ++i) {
    for (std::size_t j = 0; j < p.d(); ++j) row[j] = rng.next_gaussian();
    const double y_true = dot(row, p.w_star) + noise_scale * rng.next_gaussian();
    const double y_pred = dot(row, w);
    const double e = y_true - y_pred;
    sum += e * e;
  }
  return sum / static_cast<double>(test_size);
}

// Runs every configured method on `runs` seeded Gaussian instances. Run r of
// every method sees the same data instance and the same initialization.
inline ExperimentReport run_table_experiment(const TableExperimentConfig& cfg) {
  if (cfg.methods.empty()) throw ConfigError("table experiment: no methods");
  ExperimentReport report;
  report.run_count = cfg.runs;
  for (const MethodSpec& m : cfg.methods) report.methods.push_back(m.name);
  report.rows.resize(cfg.runs * cfg.methods.size());

  detail::parallel_for(cfg.runs, cfg.jobs, [&](std::size_t r) {
    GaussianRegressionSpec inst = cfg.base;
    inst.seed = derive_seed(cfg.base.seed, 2 * r);
    const RegressionProblem problem = gen_gaussian_regression(inst, cfg.lambda);
    Vec w0(problem.d(), 0.0);
    if (cfg.init == TableExperimentConfig::Init::Gaussian) {
      SplitMix64 g(derive_seed(cfg.base.seed, 2 * r + 1));
      w0 = g.gaussian_vec(problem.d());
    }
    const Vec w_mn = min_norm_solution(*problem.decomp, problem.y);
    const std::uint64_t test_seed = derive_seed(cfg.base.seed ^ 0x7e57da7aULL, r);

    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
      const MethodSpec& m = cfg.methods[mi];
      const std::uint64_t batch_seed =
          derive_seed(inst.seed ^ fnv1a64(m.name), 0xba7c);
      const HarnessResult res = harness_run(problem, m, w0, cfg.steps,
                                            cfg.early_stop_loss, cfg.batch_size,
                                            batch_seed);
      RunRecord rec;
      rec.method = m.name;
      rec.seed = inst.seed;
      rec.training_error = res.training_error;
      rec.test_error = gaussian_test_error(problem, res.w, cfg.test_size,
                                           cfg.base.noise_scale, test_seed);
      rec.dist_w_star = norm2(sub(res.w, problem.w_star));
      rec.dist_min_norm = norm2(sub(res.w, w_mn));
      report.rows[r * cfg.methods.size() + mi] = std::move(rec);
    }
  });
  return report;
}

struct MarginExperimentConfig {
  MarginClassificationSpec base;
  std::vector<MethodSpec> methods;
  std::size_t steps = 2000;
  std::size_t runs = 100;
  std::size_t test_size = 10000;
  DecisionRule rule = DecisionRule::FirstThreeFeatures;
  bool normalize_solution = false;  // unit-normalize w before the min-norm distance
  std::size_t jobs = 1;
};

// Pooled accuracy over ceil(test_size / n) fresh datasets from the same
// generator (each shares the training dimension d = 6n).
inline double margin_test_accuracy(const Vec& w, const MarginClassificationSpec& spec,
                                   DecisionRule rule, std::size_t test_size,
                                   std::uint64_t seed) {
  std::size_t seen = 0, correct = 0, batch = 0;
  while (seen < test_size) {
    MarginClassificationSpec ts = spec;
    ts.seed = derive_seed(seed, batch++);
    const MarginDataset data = gen_margin_classification(ts);
    const std::size_t take = std::min(data.y.size(), test_size - seen);
    MarginDataset slice;
    slice.level = data.level;
    slice.x = data.x;
    slice.y = data.y;
    if (take < data.y.size()) {
      slice.y.assign(data.y.begin(), data.y.begin() + take);
      Mat xs(take, data.x.cols());
      for (std::size_t i = 0; i < take; ++i)
        for (std::size_t j = 0; j < data.x.cols(); ++j) xs(i, j) = data.x(i, j);
      slice.x = std::move(xs);
    }
    const double acc = evaluate_classifier(w, slice, rule, spec.level);
    correct += static_cast<std::size_t>(std::llround(acc * slice.y.size()));
    seen += take;
  }
  return static_cast<double>(correct) / static_cast<double>(seen);
}

// Two-class construction of the classification counterexample: gradient
// methods against the AdaGrad variant, distances measured from the
// minimum-norm interpolant. Automatic step size is 1 / sigma_max^2.
inline ExperimentReport run_margin_experiment(const MarginExperimentConfig& cfg) {
  if (cfg.methods.empty()) throw ConfigError("margin experiment: no methods");
  ExperimentReport report;
  report.run_count = cfg.runs;
  for (const MethodSpec& m : cfg.methods) report.methods.push_back(m.name);
  report.rows.resize(cfg.runs * cfg.methods.size());

  detail::parallel_for(cfg.runs, cfg.jobs, [&](std::size_t r) {
    MarginClassificationSpec inst = cfg.base;
    inst.seed = derive_seed(cfg.base.seed, 2 * r);
    const MarginDataset data = gen_margin_classification(inst);
    const RegressionProblem problem = make_problem_from_labels(data.x, data.y, 0.0);
    const Vec w0(problem.d(), 0.0);
    const Vec& w_mn = problem.w_star;  // min-norm interpolant by construction
    const std::uint64_t test_seed = derive_seed(cfg.base.seed ^ 0x7e57da7aULL, r);

    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
      MethodSpec m = cfg.methods[mi];
      if (m.eta <= 0.0) {
        const double s = problem.decomp->sigma_max();
        m.eta = 1.0 / (s * s);
      }
      const HarnessResult res = harness_run(problem, m, w0, cfg.steps);
      RunRecord rec;
      rec.method = m.name;
      rec.seed = inst.seed;
      rec.training_error = res.training_error;
      rec.dist_w_star = norm2(sub(res.w, problem.w_star));
      if (cfg.normalize_solution && norm2(res.w) > 0.0)
        rec.dist_min_norm = norm2(sub(scaled(res.w, 1.0 / norm2(res.w)), w_mn));
      else
        rec.dist_min_norm = norm2(sub(res.w, w_mn));
      rec.accuracy =
          margin_test_accuracy(res.w, inst, cfg.rule, cfg.test_size, test_seed);
      report.rows[r * cfg.methods.size() + mi] = std::move(rec);
    }
  });
  return report;
}

// ---------------------------------------------------------------------------
// Hyperparameter sweep
// ---------------------------------------------------------------------------

struct SweepConfig {
  TableExperimentConfig base;  // methods must hold exactly one entry
  Vec etas;                    // candidate step sizes
  Vec momenta;                 // candidate heavy-ball coefficients
};

struct SweepCell {
  double eta = 0.0;
  double momentum = 0.0;
  double train_loss = std::numeric_limits<double>::infinity();
  double test_error = std::numeric_limits<double>::quiet_NaN();
  bool diverged = false;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::size_t best_index = 0;
  const SweepCell& best() const { return cells[best_index]; }
};

// Evaluates every (eta, momentum) cell by mean final training loss over the
// configured runs; diverged cells score infinity. Ties resolve to the
// smallest eta, then the smallest momentum.
inline SweepResult hyperparameter_sweep(const SweepConfig& cfg) {
  if (cfg.base.methods.size() != 1)
    throw ConfigError("sweep: exactly one base method required");
  if (cfg.etas.empty() || cfg.momenta.empty())
    throw ConfigError("sweep: grid must be nonempty");

  SweepResult result;
  result.cells.resize(cfg.etas.size() * cfg.momenta.size());
  detail::parallel_for(result.cells.size(), cfg.base.jobs, [&](std::size_t idx) {
    SweepCell cell;
    cell.eta = cfg.etas[idx / cfg.momenta.size()];
    cell.momentum = cfg.momenta[idx % cfg.momenta.size()];
    TableExperimentConfig run_cfg = cfg.base;
    run_cfg.jobs = 1;
    run_cfg.methods[0].eta = cell.eta;
    run_cfg.methods[0].momentum = cell.momentum;
    try {
      const ExperimentReport rep = run_table_experiment(run_cfg);
      cell.train_loss = rep.aggregate(run_cfg.methods[0].name,
                                      &RunRecord::training_error, Aggregate::Mean);
      cell.test_error = rep.aggregate(run_cfg.methods[0].name,
                                      &RunRecord::test_error, Aggregate::Mean);
    } catch (const Diverged&) {
      cell.diverged = true;
      cell.train_loss = std::numeric_limits<double>::infinity();
    }
    result.cells[idx] = cell;
  });

  std::size_t best = 0;
  for (std::size_t i = 1; i < result.cells.size(); ++i) {
    const SweepCell& a = result.cells[i];
    const SweepCell& b = result.cells[best];
    const bool better = a.train_loss < b.train_loss ||
                        (a.train_loss == b.train_loss &&
                         (a.eta < b.eta || (a.eta == b.eta && a.momentum < b.momentum)));
    if (better) best = i;
  }
  result.best_index = best;
  return result;
}

}  // namespace specdyn
