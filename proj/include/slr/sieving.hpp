#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

#include "slr/design_matrix.hpp"
#include "slr/errors.hpp"
#include "slr/logistic.hpp"
#include "slr/ppdna.hpp"
#include "slr/problem.hpp"
#include "slr/prox.hpp"

// Adaptive sieving: solve each grid point on a small index set I, extend the
// solution by zeros, and enlarge I with the coordinates whose dual certificate
// leaves the inflated subdifferential box until the full KKT residual passes.

namespace slr {

using IndexSet = std::vector<Index>;

/// ceil(sqrt(n)) columns with the largest |<a_j, b>| / (||a_j|| ||b||); ties go to the smaller index.
inline IndexSet initial_screen(const DesignMatrix& a, const Vector& b, std::optional<Index> count = std::nullopt) {
  if (a.rows() != b.size()) throw ShapeError("initial_screen: labels length != rows");
  const Index n = a.cols();
  const Index keep = std::min(n, count ? *count : static_cast<Index>(std::ceil(std::sqrt(static_cast<double>(n)))));
  const Vector dots = a.multiply_transpose(b);
  const Vector norms = a.column_norms();
  const double bnorm = b.norm();
  Vector score(n);
  for (Index j = 0; j < n; ++j) {
    score[j] = norms[j] > 0.0 && bnorm > 0.0 ? std::abs(dots[j]) / (norms[j] * bnorm) : 0.0;
  }
  IndexSet order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index x, Index y) { return score[x] > score[y]; });
  order.resize(static_cast<std::size_t>(keep));
  std::sort(order.begin(), order.end());
  return order;
}

namespace detail {

inline double absolute_residual(const Vector& w, const Vector& atu, const Vector& margin, const Vector& y,
                                const Vector& u, const Vector& b, double lambda) {
  const double r_grad = (logistic_loss_grad(y, b) - u).norm();
  const double r_prox = (w - soft_threshold(w - atu, lambda)).norm();
  const double r_feas = (y - margin).norm();
  return std::max({r_grad, r_prox, r_feas, std::abs(u.sum())});
}

inline void check_index_set(const IndexSet& idx, Index n) {
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] < 0 || idx[k] >= n) throw InvalidArgument("index set entry out of range");
    if (k > 0 && idx[k] <= idx[k - 1]) throw InvalidArgument("index set must be sorted and unique");
  }
}

inline Vector gather(const Vector& x, const IndexSet& idx) {
  Vector out(static_cast<Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out[static_cast<Index>(k)] = x[idx[k]];
  return out;
}

inline Vector scatter(const Vector& z, const IndexSet& idx, Index n) {
  Vector out = Vector::Zero(n);
  for (std::size_t k = 0; k < idx.size(); ++k) out[idx[k]] = z[static_cast<Index>(k)];
  return out;
}

inline IndexSet complement(const IndexSet& idx, Index n) {
  IndexSet out;
  out.reserve(static_cast<std::size_t>(n) - idx.size());
  std::size_t k = 0;
  for (Index j = 0; j < n; ++j) {
    if (k < idx.size() && idx[k] == j) {
      ++k;
    } else {
      out.push_back(j);
    }
  }
  return out;
}

}  // namespace detail

/// Absolute KKT residual of the full problem:
///   max(||grad h(y) - u||, ||w - Prox(w - A^T u)||, ||y - A w - v 1||, |1^T u|).
inline double res_full(const Vector& w, double v, const Vector& y, const Vector& u, const ProblemInstance& inst,
                       const Vector& atu) {
  if (w.size() != inst.n() || y.size() != inst.m() || u.size() != inst.m()) throw ShapeError("res_full: shape");
  if (atu.size() != inst.n()) throw ShapeError("res_full: A^T u length != n");
  return detail::absolute_residual(w, atu, margins(inst.A(), w, v), y, u, inst.b(), inst.lambda());
}

inline double res_full(const Vector& w, double v, const Vector& y, const Vector& u, const ProblemInstance& inst) {
  if (u.size() != inst.m()) throw ShapeError("res_full: shape");
  return res_full(w, v, y, u, inst, inst.A().multiply_transpose(u));
}

/// Same residual for the problem restricted to the columns in `idx`.
inline double res_reduced(const Vector& z, double v, const Vector& y, const Vector& u, const IndexSet& idx,
                          const ProblemInstance& inst) {
  detail::check_index_set(idx, inst.n());
  if (z.size() != static_cast<Index>(idx.size())) throw ShapeError("res_reduced: z length != |I|");
  if (y.size() != inst.m() || u.size() != inst.m()) throw ShapeError("res_reduced: shape");
  const Vector atu = detail::gather(inst.A().multiply_transpose(u), idx);
  const Vector margin = margins(inst.A(), detail::scatter(z, idx, inst.n()), v);
  return detail::absolute_residual(z, atu, margin, y, u, inst.b(), inst.lambda());
}

/// Coordinates outside I whose |(A^T u)_j| exceeds lambda + eps / sqrt(2 |complement|).
/// This form takes the certificate A^T u directly.
inline IndexSet expand_from_certificate(const Vector& w, const Vector& atu, const IndexSet& idx, double eps,
                                        const ProblemInstance& inst) {
  detail::check_index_set(idx, inst.n());
  if (w.size() != inst.n() || atu.size() != inst.n()) throw ShapeError("expand_index_set: shape");
  const IndexSet outside = detail::complement(idx, inst.n());
  if (outside.empty()) return {};
  for (Index j : outside) {
    if (w[j] != 0.0) throw InvalidArgument("expand_index_set: w must vanish off the index set");
  }
  const double bound = inst.lambda() + eps / std::sqrt(2.0 * static_cast<double>(outside.size()));
  IndexSet added;
  for (Index j : outside) {
    if (std::abs(atu[j]) > bound) added.push_back(j);
  }
  return added;
}

inline IndexSet expand_index_set(const Vector& w, const Vector& u, const IndexSet& idx, double eps,
                                 const ProblemInstance& inst) {
  if (u.size() != inst.m()) throw ShapeError("expand_index_set: shape");
  return expand_from_certificate(w, inst.A().multiply_transpose(u), idx, eps, inst);
}

struct ReducedWarmStart {
  Vector z;  // on the target index set
  double v = 0.0;
  Vector u;
};

struct ReducedSolution {
  Vector z;
  double v = 0.0;
  Vector y;
  Vector u;
  double residual = 0.0;  // res_reduced
  int outer_iters = 0;
  int inner_iters = 0;
  int tolerance_halvings = 0;
  Solution last;          // final PPDNA run, for its diagnostics
};

/// PPDNA on the columns in `idx`, run until res_reduced <= eps / sqrt(2).
///
/// Each time the relative KKT target is met but the absolute residual is
/// still too large, the relative tolerance is halved and the same run goes on.
inline ReducedSolution solve_reduced(const IndexSet& idx, double lambda, const std::optional<ReducedWarmStart>& warm,
                                     const ProblemInstance& inst, const PpdnaConfig& cfg, double eps,
                                     int max_halvings = 40) {
  detail::check_index_set(idx, inst.n());
  if (idx.empty()) throw InvalidArgument("solve_reduced: index set must be nonempty");
  if (!(lambda > 0.0)) throw InvalidArgument("solve_reduced: lambda must be positive");
  if (!(eps > 0.0)) throw InvalidArgument("solve_reduced: eps must be positive");
  const ProblemInstance reduced(std::make_shared<const DesignMatrix>(inst.A().select_columns(idx)), inst.b(), lambda);

  std::optional<InitialPoint> init;
  if (warm) init = InitialPoint{warm->z, warm->v, warm->u};
  const double target = eps / std::sqrt(2.0);
  ReducedSolution out;
  AcceptRule rule;
  rule.max_halvings = max_halvings;
  rule.test = [&](const Vector& z, double, const Vector& y, const Vector& u, const Vector& atu, const Vector& margin) {
    out.residual = detail::absolute_residual(z, atu, margin, y, u, inst.b(), lambda);
    return out.residual <= target;
  };
  Solution sol = ppdna_solve(reduced, init, cfg, {}, rule);
  if (!sol.converged) throw ConvergenceError("solve_reduced: absolute residual target not reached");
  out.outer_iters = sol.outer_iters;
  out.inner_iters = sol.inner_iters_total;
  out.tolerance_halvings = sol.tolerance_halvings;
  out.z = sol.w;
  out.v = sol.v;
  out.y = sol.y;
  out.u = sol.u;
  out.last = std::move(sol);
  return out;
}

struct PathConfig {
  std::vector<double> lambdas;  // strictly decreasing, positive
  double eps = 0.0;             // <= 0 selects 1e-6 (1 + ||b|| / m)
  int max_sieve_rounds = 50;
  PpdnaConfig solver;
  std::optional<IndexSet> initial_set;  // default: initial_screen

  void validate() const {
    if (lambdas.empty()) throw InvalidArgument("path: empty lambda grid");
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
      if (!(lambdas[i] > 0.0)) throw InvalidArgument("path: lambdas must be positive");
      if (i > 0 && !(lambdas[i] < lambdas[i - 1])) throw InvalidArgument("path: lambdas must be strictly decreasing");
    }
    if (max_sieve_rounds < 1) throw InvalidArgument("path: max_sieve_rounds must be positive");
    solver.validate();
  }
};

inline double default_path_eps(const Vector& b) { return 1e-6 * (1.0 + b.norm() / static_cast<double>(b.size())); }

struct PathEntry {
  double lambda = 0.0;
  Vector w;
  double v = 0.0;
  Vector y;
  Vector u;
  double residual = 0.0;       // res_full
  int sieve_rounds = 0;        // reduced problems solved (iAS)
  int outer_iters = 0;         // summed over the reduced solves (iOuter)
  int inner_iters = 0;         // iInner
  IndexSet final_set;
  std::vector<Index> set_sizes;  // |I| for every reduced solve, in order
  double wall_time = 0.0;
  double objective = 0.0;
  // invariant bookkeeping
  int gap_violations = 0;
  int domain_violations = 0;
  bool index_growth_ok = true;   // every re-solve strictly enlarged I
};

struct PathResult {
  std::vector<PathEntry> entries;
  double eps = 0.0;
  double wall_time = 0.0;
};

using PathObserver = std::function<void(const PathEntry&)>;

/// Solution path over a decreasing lambda grid by adaptive sieving.
inline PathResult as_path(const ProblemInstance& family, const PathConfig& cfg, const PathObserver& observer = {}) {
  cfg.validate();
  const auto t_path = std::chrono::steady_clock::now();
  const Index n = family.n();
  PathResult result;
  result.eps = cfg.eps > 0.0 ? cfg.eps : default_path_eps(family.b());
  const double eps = result.eps;

  IndexSet current = cfg.initial_set ? *cfg.initial_set : initial_screen(family.A(), family.b());
  detail::check_index_set(current, n);
  if (current.empty()) throw InvalidArgument("path: initial index set is empty");
  std::optional<ReducedWarmStart> warm;

  for (double lambda : cfg.lambdas) {
    const auto t0 = std::chrono::steady_clock::now();
    const ProblemInstance inst = family.with_lambda(lambda);
    PathEntry entry;
    entry.lambda = lambda;

    ReducedSolution red = solve_reduced(current, lambda, warm, inst, cfg.solver, eps);
    auto absorb = [&](const ReducedSolution& r) {
      ++entry.sieve_rounds;
      entry.outer_iters += r.outer_iters;
      entry.inner_iters += r.inner_iters;
      entry.gap_violations += r.last.gap_violations;
      entry.domain_violations += r.last.domain_violations;
      entry.set_sizes.push_back(static_cast<Index>(current.size()));
    };
    absorb(red);
    Vector w = detail::scatter(red.z, current, n);
    Vector atu = inst.A().multiply_transpose(red.u);
    double res = res_full(w, red.v, red.y, red.u, inst, atu);

    while (res > eps) {
      if (entry.sieve_rounds >= cfg.max_sieve_rounds) {
        throw ConvergenceError("path: sieve round cap reached at lambda " + std::to_string(lambda));
      }
      const IndexSet added = expand_from_certificate(w, atu, current, eps, inst);
      if (added.empty()) {
        throw ConvergenceError("path: residual above eps but no coordinate violates the screening box");
      }
      IndexSet merged;
      merged.reserve(current.size() + added.size());
      std::merge(current.begin(), current.end(), added.begin(), added.end(), std::back_inserter(merged));
      if (merged.size() <= current.size()) entry.index_growth_ok = false;
      current = std::move(merged);

      ReducedWarmStart next{detail::gather(w, current), red.v, red.u};
      red = solve_reduced(current, lambda, next, inst, cfg.solver, eps);
      absorb(red);
      w = detail::scatter(red.z, current, n);
      atu = inst.A().multiply_transpose(red.u);
      res = res_full(w, red.v, red.y, red.u, inst, atu);
    }

    entry.w = std::move(w);
    entry.v = red.v;
    entry.y = red.y;
    entry.u = red.u;
    entry.residual = res;
    entry.final_set = current;
    entry.objective = primal_objective(entry.w, entry.v, inst);
    entry.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (observer) observer(entry);
    warm = ReducedWarmStart{red.z, red.v, red.u};
    result.entries.push_back(std::move(entry));
  }
  result.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_path).count();
  return result;
}

}  // namespace slr
