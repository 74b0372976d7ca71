#pragma once

// Command implementations behind the `slr` executable. Kept in a header so the
// test suite can drive them in-process with captured streams.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "acceptance_checks.hpp"
#include "slr/baseline.hpp"
#include "slr/data_io.hpp"
#include "slr/logistic.hpp"
#include "slr/ppdna.hpp"
#include "slr/sieving.hpp"

namespace slr::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,         // bad flags or unreadable input
  kNotConverged = 2,  // a solver or verification check missed its target
  kInternal = 3,
};

enum class LogLevel { quiet, info, debug };

/// SLR_LOG_LEVEL = quiet | info | debug (default info).
inline LogLevel log_level_from_env() {
  const char* v = std::getenv("SLR_LOG_LEVEL");
  if (!v) return LogLevel::info;
  const std::string s(v);
  if (s == "quiet") return LogLevel::quiet;
  if (s == "debug") return LogLevel::debug;
  return LogLevel::info;
}

/// Input problems the user can fix; reported with exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Context {
  std::ostream& out;
  std::ostream& err;
  LogLevel level = LogLevel::info;

  void info(const std::string& msg) const {
    if (level != LogLevel::quiet) err << msg << '\n';
  }
  void debug(const nlohmann::json& rec) const {
    if (level == LogLevel::debug) err << rec.dump() << '\n';
  }
};

namespace detail {

inline Dataset load_dataset(const std::string& path, bool standardize_columns) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open data file '" + path + "'");
  Dataset ds;
  try {
    ds = parse_libsvm(in);
  } catch (const ParseError& e) {
    throw UsageError(path + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw UsageError(path + ": " + e.what());
  }
  return standardize_columns ? standardize(std::move(ds)) : ds;
}

/// Appends JSON lines to --out when given.
class RecordSink {
 public:
  explicit RecordSink(const std::string& path) {
    if (path.empty()) return;
    file_.open(path);
    if (!file_) throw UsageError("cannot write '" + path + "'");
  }
  void write(const nlohmann::json& rec) {
    if (file_.is_open()) file_ << rec.dump() << '\n';
  }

 private:
  std::ofstream file_;
};

inline std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2e", x);
  return buf;
}

inline std::string fixed(double x, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, x);
  return buf;
}

inline std::string iters(int outer, int inner) { return std::to_string(outer) + "(" + std::to_string(inner) + ")"; }

/// Right-aligned plain-text table.
class Table {
 public:
  explicit Table(std::vector<std::string> header) { rows_.push_back(std::move(header)); }
  void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }
  void print(std::ostream& os) const {
    std::vector<std::size_t> width(rows_.front().size(), 0);
    for (const auto& r : rows_)
      for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
    for (const auto& r : rows_) {
      for (std::size_t c = 0; c < r.size(); ++c) {
        os << (c ? "  " : "") << std::string(width[c] - r[c].size(), ' ') << r[c];
      }
      os << '\n';
    }
  }

 private:
  std::vector<std::vector<std::string>> rows_;
};

inline Index count_nonzero(const Vector& w) { return (w.array() != 0.0).count(); }

inline void check_format(const std::string& f) {
  if (f != "table" && f != "jsonl") throw UsageError("--format must be table or jsonl");
}

}  // namespace detail

struct SolveOptions {
  std::string data;
  std::optional<double> lambda;
  std::optional<double> lambda_frac;
  double tol = 1e-6;
  bool no_standardize = false;
  std::string solver = "ppdna";
  std::string out;
  std::string format = "table";
};

inline int cmd_solve(const SolveOptions& o, const Context& ctx) {
  if (o.lambda.has_value() == o.lambda_frac.has_value()) throw UsageError("give exactly one of --lambda or --lambda-frac");
  if (!(o.tol > 0.0)) throw UsageError("--tol must be positive");
  detail::check_format(o.format);
  const Dataset ds = detail::load_dataset(o.data, !o.no_standardize);
  const double lmax = lambda_max(ds.X, ds.b);
  const double lambda = o.lambda ? *o.lambda : *o.lambda_frac * lmax;
  if (!(lambda > 0.0)) throw UsageError("lambda must be positive");
  detail::RecordSink sink(o.out);
  const ProblemInstance inst(ds.X, ds.b, lambda);

  nlohmann::json rec{{"command", "solve"},
                     {"dataset", o.data},
                     {"m", inst.m()},
                     {"n", inst.n()},
                     {"standardized", ds.standardized},
                     {"lambda", lambda},
                     {"lambda_max", lmax},
                     {"solver", o.solver},
                     {"tol", o.tol}};
  if (o.lambda_frac) rec["lambda_frac"] = *o.lambda_frac;

  Vector w;
  double v = 0.0;
  double objective = 0.0;
  KktReport kkt;
  bool converged = false;
  int outer = 0;
  int inner = 0;
  double seconds = 0.0;
  if (o.solver == "ppdna") {
    PpdnaConfig cfg;
    cfg.tol = o.tol;
    const Solution s = ppdna_solve(inst, std::nullopt, cfg, [&](const OuterIterationLog& log) {
      ctx.debug({{"event", "outer"}, {"k", log.k}, {"inner", log.inner}, {"gap", log.gap}, {"kkt", log.kkt.total},
                 {"sigma", log.sigma}, {"gamma", log.gamma}});
    });
    w = s.w;
    v = s.v;
    objective = s.objective;
    kkt = s.kkt;
    converged = s.converged;
    outer = s.outer_iters;
    inner = s.inner_iters_total;
    seconds = s.wall_time;
  } else if (o.solver == "proxgrad") {
    BaselineConfig cfg;
    cfg.tol = o.tol;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const BaselineResult r = prox_grad_solve(inst, cfg);
      w = r.w;
      v = r.v;
      objective = r.objective;
      kkt = r.kkt;
      converged = r.converged;
      outer = static_cast<int>(r.iterations);
    } catch (const ConvergenceError& e) {
      ctx.info(std::string("proxgrad: ") + e.what());
      rec["converged"] = false;
      sink.write(rec);
      if (o.format == "jsonl") ctx.out << rec.dump() << '\n';
      return kNotConverged;
    }
    seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  } else {
    throw UsageError("--solver must be ppdna or proxgrad");
  }

  rec["outer"] = outer;
  rec["inner"] = inner;
  rec["iter"] = detail::iters(outer, inner);
  rec["kkt"] = kkt.total;
  rec["kkt1"] = kkt.rkkt1;
  rec["kkt2"] = kkt.rkkt2;
  rec["time"] = seconds;
  rec["nnz"] = detail::count_nonzero(w);
  rec["v"] = v;
  rec["objective"] = objective;
  rec["converged"] = converged;
  sink.write(rec);

  if (o.format == "jsonl") {
    ctx.out << rec.dump() << '\n';
  } else {
    detail::Table t({"solver", "lambda", "iter", "time", "kkt", "nnz", "v", "objective"});
    t.add({o.solver, detail::sci(lambda), rec["iter"].get<std::string>(), detail::fixed(seconds, 3), detail::sci(kkt.total),
           std::to_string(detail::count_nonzero(w)), detail::fixed(v, 6), detail::fixed(objective, 8)});
    t.print(ctx.out);
  }
  if (!converged) {
    ctx.info("solve: tolerance not reached");
    return kNotConverged;
  }
  return kOk;
}

struct PathOptions {
  std::string data;
  std::vector<double> lambda_fracs{0.5, 0.1, 0.05};
  double eps = 0.0;
  bool no_standardize = false;
  std::string out;
  std::string format = "table";
};

inline void check_grid(const std::vector<double>& fracs) {
  if (fracs.empty()) throw UsageError("--lambda-fracs must not be empty");
  for (std::size_t i = 0; i < fracs.size(); ++i) {
    if (!(fracs[i] > 0.0)) throw UsageError("--lambda-fracs entries must be positive");
    if (i > 0 && !(fracs[i] < fracs[i - 1])) throw UsageError("--lambda-fracs must be strictly decreasing");
  }
}

inline nlohmann::json path_record(const PathEntry& e, double frac, double eps) {
  return {{"command", "path"},
          {"lambda", e.lambda},
          {"lambda_frac", frac},
          {"nnz", detail::count_nonzero(e.w)},
          {"ias", e.sieve_rounds},
          {"outer", e.outer_iters},
          {"inner", e.inner_iters},
          {"iter", detail::iters(e.outer_iters, e.inner_iters)},
          {"res", e.residual},
          {"eps", eps},
          {"time", e.wall_time},
          {"objective", e.objective},
          {"v", e.v},
          {"index_set_size", e.final_set.size()}};
}

inline int cmd_path(const PathOptions& o, const Context& ctx) {
  check_grid(o.lambda_fracs);
  if (o.eps < 0.0) throw UsageError("--eps must be nonnegative");
  detail::check_format(o.format);
  const Dataset ds = detail::load_dataset(o.data, !o.no_standardize);
  const double lmax = lambda_max(ds.X, ds.b);
  detail::RecordSink sink(o.out);
  const ProblemInstance family(ds.X, ds.b, lmax);

  PathConfig cfg;
  for (double f : o.lambda_fracs) cfg.lambdas.push_back(f * lmax);
  cfg.eps = o.eps;
  std::vector<nlohmann::json> records;
  std::size_t k = 0;
  PathResult result;
  try {
    result = as_path(family, cfg, [&](const PathEntry& e) {
      nlohmann::json rec = path_record(e, o.lambda_fracs[k++], cfg.eps > 0.0 ? cfg.eps : default_path_eps(ds.b));
      rec["dataset"] = o.data;
      rec["lambda_max"] = lmax;
      ctx.debug(rec);
      sink.write(rec);
      records.push_back(std::move(rec));
    });
  } catch (const ConvergenceError& e) {
    ctx.info(std::string("path: ") + e.what());
    return kNotConverged;
  }

  if (o.format == "jsonl") {
    for (const auto& r : records) ctx.out << r.dump() << '\n';
  } else {
    detail::Table t({"lambda/lmax", "lambda", "nnz", "iAS", "iOuter(iInner)", "res", "time"});
    for (const auto& r : records) {
      t.add({detail::fixed(r["lambda_frac"].get<double>(), 4), detail::sci(r["lambda"].get<double>()),
             std::to_string(r["nnz"].get<long>()), std::to_string(r["ias"].get<int>()), r["iter"].get<std::string>(),
             detail::sci(r["res"].get<double>()), detail::fixed(r["time"].get<double>(), 3)});
    }
    t.print(ctx.out);
  }
  return kOk;
}

struct GenOptions {
  long m = 0;
  long n = 0;
  std::uint64_t seed = 1;
  std::string out;
};

inline int cmd_gen(const GenOptions& o, const Context& ctx) {
  if (o.m < 2 || o.n < 1) throw UsageError("need --m >= 2 and --n >= 1");
  if (o.out.empty()) throw UsageError("--out is required");
  const Dataset ds = synth_gen(o.m, o.n, o.seed);
  {
    std::ofstream f(o.out);
    if (!f) throw UsageError("cannot write '" + o.out + "'");
    write_libsvm(f, ds.X, ds.labels);
    if (!f) throw UsageError("write failed for '" + o.out + "'");
  }
  nlohmann::json meta = dataset_metadata(ds);
  meta["generator"] = "two-gaussian, splitmix64 counter stream, Box-Muller normals";
  meta["seed"] = o.seed;
  meta["zero_fraction"] = 0.7;
  const std::string sidecar = o.out + ".meta.json";
  {
    std::ofstream f(sidecar);
    if (!f) throw UsageError("cannot write '" + sidecar + "'");
    f << meta.dump(2) << '\n';
  }
  nlohmann::json rec{{"command", "gen"}, {"file", o.out}, {"metadata", sidecar}};
  rec.update(meta);
  ctx.out << rec.dump() << '\n';
  return kOk;
}

struct VerifyOptions {
  bool quick = false;
  std::string out;
};

inline int cmd_verify(const VerifyOptions& o, const Context& ctx) {
  acceptance::Options opt;
  opt.quick = o.quick;
  detail::RecordSink sink(o.out);
  int failed = 0;
  acceptance::run_all(opt, [&](const acceptance::Outcome& r) {
    ctx.out << acceptance::format_line(r) << std::endl;
    sink.write({{"command", "verify"},
                {"criterion", r.id},
                {"name", r.name},
                {"status", acceptance::status_word(r.status)},
                {"detail", r.detail},
                {"time", r.seconds}});
    if (r.status == acceptance::Status::fail) ++failed;
  });
  if (failed > 0) {
    ctx.info("verify: " + std::to_string(failed) + " check(s) failed");
    return kNotConverged;
  }
  return kOk;
}

struct BenchOptions {
  std::vector<int> cases{1, 2, 3};
  std::uint64_t seed = 1;
  std::vector<double> lambda_fracs{0.5, 0.1, 0.05};
  std::string out;
};

/// Synthetic cases (200 i, 5000 i): PPDNA per lambda next to the sieved path.
inline int cmd_bench(const BenchOptions& o, const Context& ctx) {
  check_grid(o.lambda_fracs);
  for (int c : o.cases)
    if (c < 1 || c > 9) throw UsageError("--cases entries must be in 1..9");
  detail::RecordSink sink(o.out);
  detail::Table t({"case", "m", "n", "lambda/lmax", "PPDNA iter", "time", "kkt", "nnz", "AS iAS", "iOuter(iInner)", "time",
                   "res", "nnz"});
  bool all_converged = true;
  for (int c : o.cases) {
    const Index m = 200 * c;
    const Index n = 5000 * c;
    const Dataset ds = synth_gen(m, n, o.seed);
    const double lmax = lambda_max(ds.X, ds.b);
    const ProblemInstance family(ds.X, ds.b, lmax);
    std::vector<Solution> full;
    for (double f : o.lambda_fracs) {
      full.push_back(ppdna_solve(family.with_lambda(f * lmax), std::nullopt, PpdnaConfig{}));
      all_converged = all_converged && full.back().converged;
    }
    PathConfig cfg;
    for (double f : o.lambda_fracs) cfg.lambdas.push_back(f * lmax);
    const PathResult path = as_path(family, cfg);
    for (std::size_t k = 0; k < o.lambda_fracs.size(); ++k) {
      const Solution& s = full[k];
      const PathEntry& e = path.entries[k];
      nlohmann::json rec{{"command", "bench"},
                         {"case", c},
                         {"m", m},
                         {"n", n},
                         {"seed", o.seed},
                         {"lambda_frac", o.lambda_fracs[k]},
                         {"lambda", e.lambda},
                         {"ppdna", {{"outer", s.outer_iters}, {"inner", s.inner_iters_total}, {"time", s.wall_time},
                                    {"kkt", s.kkt.total}, {"nnz", detail::count_nonzero(s.w)}, {"converged", s.converged}}},
                         {"as", {{"ias", e.sieve_rounds}, {"outer", e.outer_iters}, {"inner", e.inner_iters},
                                 {"time", e.wall_time}, {"res", e.residual}, {"nnz", detail::count_nonzero(e.w)}}}};
      sink.write(rec);
      ctx.debug(rec);
      t.add({std::to_string(c), std::to_string(m), std::to_string(n), detail::fixed(o.lambda_fracs[k], 4),
             detail::iters(s.outer_iters, s.inner_iters_total), detail::fixed(s.wall_time, 3), detail::sci(s.kkt.total),
             std::to_string(detail::count_nonzero(s.w)), std::to_string(e.sieve_rounds),
             detail::iters(e.outer_iters, e.inner_iters), detail::fixed(e.wall_time, 3), detail::sci(e.residual),
             std::to_string(detail::count_nonzero(e.w))});
    }
  }
  t.print(ctx.out);
  return all_converged ? kOk : kNotConverged;
}

/// Parse and dispatch. argv[0] is the program name.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparse l1-regularized logistic regression"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  SolveOptions so;
  auto* solve = app.add_subcommand("solve", "Solve one problem");
  solve->add_option("--data", so.data, "LIBSVM file")->required();
  solve->add_option("--lambda", so.lambda, "Regularization weight");
  solve->add_option("--lambda-frac", so.lambda_frac, "Weight as a fraction of lambda_max");
  solve->add_option("--tol", so.tol, "Relative KKT tolerance")->capture_default_str();
  solve->add_flag("--no-standardize", so.no_standardize, "Use the features as read");
  solve->add_option("--solver", so.solver, "ppdna or proxgrad")->capture_default_str();
  solve->add_option("--out", so.out, "Write the JSON record here");
  solve->add_option("--format", so.format, "table or jsonl")->capture_default_str();

  PathOptions po;
  auto* path = app.add_subcommand("path", "Solution path by adaptive sieving");
  path->add_option("--data", po.data, "LIBSVM file")->required();
  path->add_option("--lambda-fracs", po.lambda_fracs, "Decreasing fractions of lambda_max")->delimiter(',')->capture_default_str();
  path->add_option("--eps", po.eps, "Absolute residual target (0: 1e-6 (1 + ||b|| / m))");
  path->add_flag("--no-standardize", po.no_standardize, "Use the features as read");
  path->add_option("--out", po.out, "Write one JSON record per grid point here");
  path->add_option("--format", po.format, "table or jsonl")->capture_default_str();

  GenOptions go;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic data set");
  gen->add_option("--m", go.m, "Samples")->required();
  gen->add_option("--n", go.n, "Features")->required();
  gen->add_option("--seed", go.seed, "Seed")->capture_default_str();
  gen->add_option("--out", go.out, "LIBSVM output file (metadata goes to <out>.meta.json)")->required();

  VerifyOptions vo;
  auto* verify = app.add_subcommand("verify", "Run the acceptance checks");
  verify->add_flag("--quick", vo.quick, "Fewer random instances");
  verify->add_option("--out", vo.out, "Write one JSON record per check here");

  BenchOptions bo;
  auto* bench = app.add_subcommand("bench", "Synthetic benchmark table");
  bench->add_option("--cases", bo.cases, "Case numbers i for (200 i, 5000 i)")->delimiter(',')->capture_default_str();
  bench->add_option("--seed", bo.seed, "Seed")->capture_default_str();
  bench->add_option("--lambda-fracs", bo.lambda_fracs, "Decreasing fractions of lambda_max")->delimiter(',')->capture_default_str();
  bench->add_option("--out", bo.out, "Write one JSON record per row here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  const Context ctx{out, err, log_level_from_env()};
  try {
    if (*solve) return cmd_solve(so, ctx);
    if (*path) return cmd_path(po, ctx);
    if (*gen) return cmd_gen(go, ctx);
    if (*verify) return cmd_verify(vo, ctx);
    if (*bench) return cmd_bench(bo, ctx);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConvergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kNotConverged;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kUsage;
}

}  // namespace slr::cli
