#pragma once

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "specdyn/analysis.hpp"
#include "specdyn/dynamics.hpp"
#include "specdyn/errors.hpp"
#include "specdyn/experiments.hpp"
#include "specdyn/io.hpp"
#include "specdyn/precond.hpp"

namespace specdyn::cli {

using nlohmann::json;

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed_flag;
  std::size_t jobs = 1;
  bool verbose = false;
};

// Seed precedence: --seed flag, then PRECOND_SEED, then the config value.
inline std::uint64_t resolve_seed(const CommonArgs& args, std::uint64_t config_seed) {
  if (args.seed_flag) return *args.seed_flag;
  if (const char* env = std::getenv("PRECOND_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError("PRECOND_SEED is not an unsigned integer");
    }
  }
  return config_seed;
}

inline void log_verbose(const CommonArgs& args, const std::string& msg) {
  if (args.verbose) std::cerr << "specdyn: " << msg << "\n";
}

inline Vec parse_double_list(const std::string& text, const std::string& what) {
  Vec out;
  std::istringstream is(text);
  std::string cell;
  while (std::getline(is, cell, ',')) {
    try {
      out.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw ConfigError(what + ": bad number '" + cell + "'");
    }
  }
  if (out.empty()) throw ConfigError(what + ": empty list");
  return out;
}

struct ProblemSetup {
  RegressionProblem problem;
  GaussianRegressionSpec spec;
  double lambda = 0.0;
};

inline ProblemSetup gaussian_problem_from_config(const ParsedConfig& cfg,
                                                 std::uint64_t seed) {
  const ConfigSection& g = cfg.globals;
  GaussianRegressionSpec spec;
  spec.n = static_cast<std::size_t>(g.get_u64_or("n", 10));
  spec.d = static_cast<std::size_t>(g.get_u64_or("d", 50));
  spec.noise_scale = g.get_double_or("noise_scale", 1.0);
  spec.seed = seed;
  const double lambda = g.get_double_or("lambda", 0.0);
  ProblemSetup setup{gen_gaussian_regression(spec, lambda), spec, lambda};
  return setup;
}

inline Vec initial_iterate(const ConfigSection& g, const RegressionProblem& p,
                           std::uint64_t seed) {
  const std::string mode = g.get_or("w0", "zero");
  if (mode == "zero") return Vec(p.d(), 0.0);
  if (mode == "gaussian") {
    SplitMix64 rng(derive_seed(seed, 0xa110c8edULL));
    return rng.gaussian_vec(p.d());
  }
  throw ConfigError("w0 must be 'zero' or 'gaussian'");
}

inline std::vector<MethodSpec> methods_from_config(const ParsedConfig& cfg,
                                                   bool allow_momentum) {
  std::vector<MethodSpec> methods;
  for (const ConfigSection& s : cfg.sections) {
    MethodSpec m = method_from_section(s);
    if (!allow_momentum && m.momentum != 0.0)
      throw ConfigError("momentum is only available in table/sweep harnesses");
    methods.push_back(std::move(m));
  }
  if (methods.empty()) throw ConfigError("config declares no [method] sections");
  return methods;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

inline int cmd_simulate(const CommonArgs& args) {
  const ParsedConfig cfg = read_config_file(args.config_path);
  const std::uint64_t seed = resolve_seed(args, cfg.globals.get_u64_or("seed", 0));
  const ProblemSetup setup = gaussian_problem_from_config(cfg, seed);
  const RegressionProblem& p = setup.problem;
  if (!setup.spec.over_parameterized())
    log_verbose(args, "warning: d <= n, instance is not over-parameterized");
  const std::size_t steps =
      static_cast<std::size_t>(cfg.globals.get_u64_or("steps", 2000));
  const double early_stop = cfg.globals.get_double_or("early_stop_loss", -1.0);
  const Vec w0 = initial_iterate(cfg.globals, p, seed);
  const std::vector<MethodSpec> methods = methods_from_config(cfg, false);

  std::vector<Trajectory> trajectories(methods.size());
  std::vector<double> etas(methods.size());
  detail::parallel_for(methods.size(), args.jobs, [&](std::size_t i) {
    const MethodSpec& m = methods[i];
    PrecondState state(m.precond, p.decomp);
    const double eta = m.eta > 0.0 ? m.eta : auto_eta(p, m.precond);
    etas[i] = eta;
    RunOptions opts;
    opts.record_coupling_norm = true;
    opts.early_stop_loss = early_stop > 0.0 ? early_stop : -1.0;
    trajectories[i] = run(p, std::move(state), eta, steps, w0, opts);
    log_verbose(args, "ran " + m.name);
  });

  json summary;
  summary["config_hash"] = hex64(cfg.hash());
  summary["seed"] = seed;
  summary["n"] = p.n();
  summary["d"] = p.d();
  summary["rank"] = p.rank();
  summary["lambda"] = setup.lambda;
  const Vec w_mn = min_norm_solution(*p.decomp, p.y);
  for (std::size_t i = 0; i < methods.size(); ++i) {
    const Trajectory& t = trajectories[i];
    const std::filesystem::path path =
        std::filesystem::path(args.out_dir) / (methods[i].name + "_trajectory.csv");
    atomic_write(path, trajectory_to_csv(t, cfg.hash(), seed));
    json entry;
    entry["eta"] = etas[i];
    entry["steps_run"] = t.steps();
    entry["final_loss"] = t.losses.back();
    entry["final_in_span_error"] = t.in_span_error.back();
    entry["final_out_span_drift"] = t.out_span_drift.back();
    entry["final_dist_min_norm"] = norm2(sub(t.iterates.back(), w_mn));
    summary["methods"][methods[i].name] = entry;
  }
  atomic_write(std::filesystem::path(args.out_dir) / "summary.json",
               summary.dump(2) + "\n");
  return 0;
}

inline int cmd_closed_form_check(const CommonArgs& args) {
  const ParsedConfig cfg = read_config_file(args.config_path);
  const std::uint64_t seed = resolve_seed(args, cfg.globals.get_u64_or("seed", 0));
  const ProblemSetup setup = gaussian_problem_from_config(cfg, seed);
  const RegressionProblem& p = setup.problem;
  const std::size_t steps =
      static_cast<std::size_t>(cfg.globals.get_u64_or("steps", 100));
  const Vec w0 = initial_iterate(cfg.globals, p, seed);
  const SpectralVector w0s = to_spectral(*p.decomp, w0);
  const std::vector<MethodSpec> methods = methods_from_config(cfg, false);

  json report;
  report["config_hash"] = hex64(cfg.hash());
  report["seed"] = seed;
  report["lambda"] = setup.lambda;
  report["steps"] = steps;
  bool all_ok = true;
  for (const MethodSpec& m : methods) {
    PrecondState state(m.precond, p.decomp);
    const double eta = m.eta > 0.0 ? m.eta : auto_eta(p, m.precond);
    RunOptions opts;
    opts.record_preconditioners = true;
    const Trajectory traj = run(p, std::move(state), eta, steps, w0, opts);
    const SpectralVector cf = closed_form_iterate(p, traj.preconditioners, eta, w0s);
    const Vec cf_orig = from_spectral(*p.decomp, cf);
    const double resid = norm_inf(sub(cf_orig, traj.iterates.back()));
    json entry;
    entry["eta"] = eta;
    entry["closed_form_residual"] = resid;
    entry["closed_form_ok"] = resid <= 1e-9;
    all_ok = all_ok && resid <= 1e-9;
    if (setup.lambda == 0.0) {
      const BlockIterate blk = block_closed_form(p, traj.preconditioners, eta, w0s);
      Vec stacked = blk.in_span;
      stacked.insert(stacked.end(), blk.out_span.begin(), blk.out_span.end());
      const double blk_resid = norm_inf(sub(stacked, cf.full()));
      entry["block_form_residual"] = blk_resid;
      entry["block_form_ok"] = blk_resid <= 1e-9;
      all_ok = all_ok && blk_resid <= 1e-9;
    }
    report["methods"][m.name] = entry;
    std::cout << m.name << ": closed-form residual "
              << format_double(resid) << "\n";
  }
  report["all_ok"] = all_ok;
  atomic_write(std::filesystem::path(args.out_dir) / "closed_form_check.json",
               report.dump(2) + "\n");
  return 0;
}

inline int cmd_fixed_point(const CommonArgs& args) {
  const ParsedConfig cfg = read_config_file(args.config_path);
  const std::uint64_t seed = resolve_seed(args, cfg.globals.get_u64_or("seed", 0));
  const ProblemSetup setup = gaussian_problem_from_config(cfg, seed);
  const RegressionProblem& p = setup.problem;

  Vec spectral(p.d(), 0.0);
  if (setup.lambda > 0.0) {
    spectral = regularized_fixed_point(p).full();
  } else {
    const Vec in = inspan_fixed_point(p);
    std::copy(in.begin(), in.end(), spectral.begin());
  }
  const Vec original = matvec(p.decomp->right_basis, spectral);

  std::string csv = "# config_hash=" + hex64(cfg.hash()) +
                    " seed=" + std::to_string(seed) + "\n";
  csv += "index,spectral,original\n";
  for (std::size_t i = 0; i < p.d(); ++i) {
    csv += std::to_string(i);
    csv += ',';
    csv += format_double(spectral[i]);
    csv += ',';
    csv += format_double(original[i]);
    csv += '\n';
  }
  atomic_write(std::filesystem::path(args.out_dir) / "fixed_point.csv", csv);

  double out_norm = 0.0;
  for (std::size_t i = p.rank(); i < p.d(); ++i) out_norm += spectral[i] * spectral[i];
  json meta;
  meta["config_hash"] = hex64(cfg.hash());
  meta["seed"] = seed;
  meta["lambda"] = setup.lambda;
  meta["rank"] = p.rank();
  meta["out_span_norm"] = std::sqrt(out_norm);
  meta["note"] = setup.lambda > 0.0
                     ? "unique limit of any positive definite preconditioner"
                     : "in-span limit; the out-of-span block keeps its "
                       "initialization for span-preserving methods";
  atomic_write(std::filesystem::path(args.out_dir) / "fixed_point.json",
               meta.dump(2) + "\n");
  return 0;
}

inline TableExperimentConfig table_config_from(const ParsedConfig& cfg,
                                               const CommonArgs& args,
                                               std::uint64_t seed) {
  TableExperimentConfig tc;
  tc.base.n = static_cast<std::size_t>(cfg.globals.get_u64_or("n", 10));
  tc.base.d = static_cast<std::size_t>(cfg.globals.get_u64_or("d", 50));
  tc.base.noise_scale = cfg.globals.get_double_or("noise_scale", 1.0);
  tc.base.seed = seed;
  tc.lambda = cfg.globals.get_double_or("lambda", 0.0);
  tc.steps = static_cast<std::size_t>(cfg.globals.get_u64_or("steps", 2000));
  tc.runs = static_cast<std::size_t>(cfg.globals.get_u64_or("runs", 5));
  tc.test_size = static_cast<std::size_t>(cfg.globals.get_u64_or("test_size", 10000));
  tc.early_stop_loss = cfg.globals.get_double_or("early_stop_loss", 1e-24);
  tc.batch_size = static_cast<std::size_t>(cfg.globals.get_u64_or("batch_size", 0));
  const std::string init = cfg.globals.get_or("w0", "zero");
  if (init == "zero") tc.init = TableExperimentConfig::Init::Zero;
  else if (init == "gaussian") tc.init = TableExperimentConfig::Init::Gaussian;
  else throw ConfigError("w0 must be 'zero' or 'gaussian'");
  tc.jobs = args.jobs;
  tc.methods = methods_from_config(cfg, true);
  return tc;
}

inline json report_aggregates(const ExperimentReport& report) {
  json agg;
  for (const std::string& name : report.methods) {
    json row;
    for (const auto& [label, field] :
         std::vector<std::pair<std::string, double RunRecord::*>>{
             {"training_error", &RunRecord::training_error},
             {"test_error", &RunRecord::test_error},
             {"dist_w_star", &RunRecord::dist_w_star},
             {"dist_min_norm", &RunRecord::dist_min_norm},
             {"accuracy", &RunRecord::accuracy}}) {
      const double mean = report.aggregate(name, field, Aggregate::Mean);
      const double median = report.aggregate(name, field, Aggregate::Median);
      if (std::isnan(mean) && std::isnan(median)) continue;
      row[label]["mean"] = mean;
      row[label]["median"] = median;
    }
    agg[name] = row;
  }
  return agg;
}

inline json report_rows_json(const ExperimentReport& report) {
  json rows = json::array();
  for (const RunRecord& r : report.rows) {
    json metrics;
    metrics["training_error"] = r.training_error;
    if (!std::isnan(r.test_error)) metrics["test_error"] = r.test_error;
    metrics["dist_w_star"] = r.dist_w_star;
    metrics["dist_min_norm"] = r.dist_min_norm;
    if (!std::isnan(r.accuracy)) metrics["accuracy"] = r.accuracy;
    rows.push_back({{"method", r.method}, {"seed", r.seed}, {"metrics", metrics}});
  }
  return rows;
}

inline int cmd_table_gaussian(const CommonArgs& args) {
  const ParsedConfig cfg = read_config_file(args.config_path);
  const std::uint64_t seed = resolve_seed(args, cfg.globals.get_u64_or("seed", 0));
  const TableExperimentConfig tc = table_config_from(cfg, args, seed);
  const ExperimentReport report = run_table_experiment(tc);

  atomic_write(std::filesystem::path(args.out_dir) / "report.csv",
               report_to_csv(report, cfg.hash(), seed));
  json doc;
  doc["config_hash"] = hex64(cfg.hash());
  doc["seed"] = seed;
  doc["runs"] = report.run_count;
  doc["rows"] = report_rows_json(report);
  doc["aggregates"] = report_aggregates(report);
  atomic_write(std::filesystem::path(args.out_dir) / "report.json",
               doc.dump(2) + "\n");
  return 0;
}

inline int cmd_table_margin(const CommonArgs& args) {
  const ParsedConfig cfg = read_config_file(args.config_path);
  const std::uint64_t seed = resolve_seed(args, cfg.globals.get_u64_or("seed", 0));
  MarginExperimentConfig mc;
  mc.base.n = static_cast<std::size_t>(cfg.globals.get_u64_or("n", 50));
  mc.base.level = cfg.globals.get_double_or("level", 1.0 / 32.0);
  mc.base.positive_prob = cfg.globals.get_double_or("positive_prob", 7.0 / 8.0);
  mc.base.seed = seed;
  mc.steps = static_cast<std::size_t>(cfg.globals.get_u64_or("steps", 2000));
  mc.runs = static_cast<std::size_t>(cfg.globals.get_u64_or("runs", 100));
  mc.test_size = static_cast<std::size_t>(cfg.globals.get_u64_or("test_size", 10000));
  const std::string rule = cfg.globals.get_or("rule", "first_three");
  if (rule == "first_three") mc.rule = DecisionRule::FirstThreeFeatures;
  else if (rule == "full_sign") mc.rule = DecisionRule::FullSignRule;
  else throw ConfigError("rule must be 'first_three' or 'full_sign'");
  const std::string normalize = cfg.globals.get_or("normalize_solution", "false");
  mc.normalize_solution = (normalize == "true" || normalize == "1");
  mc.jobs = args.jobs;
  mc.methods = methods_from_config(cfg, true);

  const ExperimentReport report = run_margin_experiment(mc);
  atomic_write(std::filesystem::path(args.out_dir) / "report.csv",
               report_to_csv(report, cfg.hash(), seed));
  json doc;
  doc["config_hash"] = hex64(cfg.hash());
  doc["seed"] = seed;
  doc["runs"] = report.run_count;
  doc["rows"] = report_rows_json(report);
  doc["aggregates"] = report_aggregates(report);
  atomic_write(std::filesystem::path(args.out_dir) / "report.json",
               doc.dump(2) + "\n");
  return 0;
}

struct DecayArgs {
  std::string input;
  std::string column = "e1";
  std::size_t t_start = 0;  // 0 selects the second half automatically
  std::size_t t_end = 0;
};

inline int cmd_decay(const CommonArgs& args, const DecayArgs& dargs) {
  const CsvTable table = read_csv_table(dargs.input);
  const Vec tcol = table.column("t");
  for (std::size_t i = 0; i < tcol.size(); ++i)
    if (tcol[i] != static_cast<double>(i))
      throw IoError("decay: trajectory rows must be ordered t = 0..T");
  const Vec series = table.column(dargs.column);
  const std::size_t t_max = series.size() - 1;
  const std::size_t t_start = dargs.t_start > 0 ? dargs.t_start
                                                : std::max<std::size_t>(1, t_max / 2);
  const std::size_t t_end = dargs.t_end > 0 ? dargs.t_end : t_max;
  const DecayEstimate est = estimate_decay(series, t_start, t_end);

  const std::string flags = "input=" + dargs.input + ",column=" + dargs.column +
                            ",t_start=" + std::to_string(t_start) +
                            ",t_end=" + std::to_string(t_end);
  json doc;
  doc["config_hash"] = hex64(fnv1a64(flags));
  doc["seed"] = args.seed_flag ? *args.seed_flag : 0;
  doc["input"] = dargs.input;
  doc["column"] = dargs.column;
  doc["t_start"] = est.t_start;
  doc["t_end"] = est.t_end;
  doc["exponent"] = est.exponent;
  doc["log_log_r2"] = est.log_log_r2;
  const std::string text = doc.dump(2) + "\n";
  atomic_write(std::filesystem::path(args.out_dir) / "decay.json", text);
  std::cout << text;
  return 0;
}

struct BoundCurveArgs {
  BoundCurveParams params;
  double t_max = 1000.0;
  std::size_t samples = 200;
};

inline int cmd_bound_curve(const CommonArgs& args, const BoundCurveArgs& bargs) {
  bargs.params.validate();
  if (bargs.samples < 2) throw ConfigError("bound-curve: need at least 2 samples");
  std::vector<double> ts;
  ts.push_back(0.0);
  if (bargs.t_max >= 1.0) {
    const double ratio = std::pow(bargs.t_max, 1.0 / (bargs.samples - 1));
    double t = 1.0;
    for (std::size_t i = 1; i < bargs.samples; ++i) {
      const double rounded = std::floor(t + 0.5);
      if (ts.empty() || rounded > ts.back()) ts.push_back(rounded);
      t *= ratio;
    }
    if (ts.back() != std::floor(bargs.t_max))
      ts.push_back(std::floor(bargs.t_max));
  }

  const std::string flags =
      "a=" + format_double(bargs.params.a) + ",b=" + format_double(bargs.params.b) +
      ",c=" + format_double(bargs.params.c) +
      ",alpha=" + format_double(bargs.params.alpha) +
      ",beta=" + format_double(bargs.params.beta) +
      ",T=" + format_double(bargs.t_max) + ",samples=" + std::to_string(bargs.samples);
  const std::uint64_t seed = args.seed_flag ? *args.seed_flag : 0;
  std::string csv =
      "# config_hash=" + hex64(fnv1a64(flags)) + " seed=" + std::to_string(seed) + "\n";
  csv += "T,value\n";
  for (double t : ts) {
    csv += format_double(t);
    csv += ',';
    csv += format_double(bound_curve(bargs.params, t));
    csv += '\n';
  }
  atomic_write(std::filesystem::path(args.out_dir) / "bound_curve.csv", csv);
  return 0;
}

inline int cmd_sweep(const CommonArgs& args) {
  const ParsedConfig cfg = read_config_file(args.config_path);
  const std::uint64_t seed = resolve_seed(args, cfg.globals.get_u64_or("seed", 0));
  SweepConfig sc;
  sc.base = table_config_from(cfg, args, seed);
  if (sc.base.methods.size() != 1)
    throw ConfigError("sweep: config must declare exactly one method section");
  sc.etas = parse_double_list(cfg.globals.get("etas"), "etas");
  sc.momenta = cfg.globals.has("momenta")
                   ? parse_double_list(cfg.globals.get("momenta"), "momenta")
                   : Vec{0.0};
  const SweepResult result = hyperparameter_sweep(sc);

  std::string csv = "# config_hash=" + hex64(cfg.hash()) +
                    " seed=" + std::to_string(seed) + "\n";
  csv += "eta,momentum,train_loss,test_error,diverged\n";
  for (const SweepCell& c : result.cells) {
    csv += format_double(c.eta);
    csv += ',';
    csv += format_double(c.momentum);
    csv += ',';
    csv += format_double(c.train_loss);
    csv += ',';
    csv += format_double(c.test_error);
    csv += ',';
    csv += c.diverged ? "1" : "0";
    csv += '\n';
  }
  atomic_write(std::filesystem::path(args.out_dir) / "sweep.csv", csv);

  json best;
  best["config_hash"] = hex64(cfg.hash());
  best["seed"] = seed;
  best["eta"] = result.best().eta;
  best["momentum"] = result.best().momentum;
  best["train_loss"] = result.best().train_loss;
  best["diverged"] = result.best().diverged;
  atomic_write(std::filesystem::path(args.out_dir) / "best.json", best.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline int dispatch(const std::vector<std::string>& argv) {
  CLI::App app{"Preconditioned gradient dynamics for over-parameterized regression"};
  app.require_subcommand(1);

  CommonArgs common;
  DecayArgs decay_args;
  BoundCurveArgs bound_args;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    if (needs_config)
      sub->add_option("--config", common.config_path, "config file")->required();
    sub->add_option("--out", common.out_dir, "output directory")->required();
    sub->add_option("--seed", common.seed_flag, "seed override");
    sub->add_option("--jobs", common.jobs, "parallel runs");
    sub->add_flag("-v,--verbose", common.verbose, "progress to stderr");
  };

  CLI::App* simulate = app.add_subcommand("simulate", "run preconditioned dynamics");
  add_common(simulate, true);
  CLI::App* cf = app.add_subcommand("closed-form-check",
                                    "compare runs against the closed-form iterate");
  add_common(cf, true);
  CLI::App* fp = app.add_subcommand("fixed-point", "analytic limit of the dynamics");
  add_common(fp, true);
  CLI::App* tg = app.add_subcommand("table-gaussian",
                                    "Gaussian regression method comparison");
  add_common(tg, true);
  CLI::App* tm = app.add_subcommand("table-margin",
                                    "two-class margin counterexample comparison");
  add_common(tm, true);
  CLI::App* dc = app.add_subcommand("decay", "fit a power-law exponent to a series");
  add_common(dc, false);
  dc->add_option("--input", decay_args.input, "trajectory CSV")->required();
  dc->add_option("--column", decay_args.column, "column to fit");
  dc->add_option("--t-start", decay_args.t_start, "first step of the fit window");
  dc->add_option("--t-end", decay_args.t_end, "last step of the fit window");
  CLI::App* bc = app.add_subcommand("bound-curve", "sample the error-bound dynamics");
  add_common(bc, false);
  bc->add_option("--a", bound_args.params.a, "saturation constant");
  bc->add_option("--b", bound_args.params.b, "amplitude constant");
  bc->add_option("--c", bound_args.params.c, "coupling constant");
  bc->add_option("--alpha", bound_args.params.alpha, "preconditioner decay exponent");
  bc->add_option("--beta", bound_args.params.beta, "in-span decay exponent");
  bc->add_option("--T", bound_args.t_max, "largest step to sample");
  bc->add_option("--samples", bound_args.samples, "number of samples");
  CLI::App* sw = app.add_subcommand("sweep", "step-size / momentum grid search");
  add_common(sw, true);

  std::vector<const char*> cargv;
  cargv.push_back("specdyn");
  for (const std::string& a : argv) cargv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "specdyn: " << e.what() << "\n";
    std::cerr << "run 'specdyn --help' for usage\n";
    return 1;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(common);
    if (cf->parsed()) return cmd_closed_form_check(common);
    if (fp->parsed()) return cmd_fixed_point(common);
    if (tg->parsed()) return cmd_table_gaussian(common);
    if (tm->parsed()) return cmd_table_margin(common);
    if (dc->parsed()) return cmd_decay(common, decay_args);
    if (bc->parsed()) return cmd_bound_curve(common, bound_args);
    if (sw->parsed()) return cmd_sweep(common);
  } catch (const ConfigError& e) {
    std::cerr << "specdyn: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "specdyn: " << e.what() << "\n";
    return 1;
  } catch (const Diverged& e) {
    json err;
    err["error"]["type"] = "Diverged";
    err["error"]["message"] = e.what();
    err["error"]["step"] = e.step;
    const std::string text = err.dump(2) + "\n";
    std::cout << text;
    if (!common.out_dir.empty()) {
      try {
        atomic_write(std::filesystem::path(common.out_dir) / "error.json", text);
      } catch (const std::exception&) {
      }
    }
    return 2;
  } catch (const Error& e) {
    json err;
    err["error"]["type"] = "NumericalError";
    err["error"]["message"] = e.what();
    const std::string text = err.dump(2) + "\n";
    std::cout << text;
    if (!common.out_dir.empty()) {
      try {
        atomic_write(std::filesystem::path(common.out_dir) / "error.json", text);
      } catch (const std::exception&) {
      }
    }
    return 2;
  }
  return 1;
}

}  // namespace specdyn::cli
