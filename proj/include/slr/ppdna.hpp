#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <utility>

#include "slr/design_matrix.hpp"
#include "slr/errors.hpp"
#include "slr/logistic.hpp"
#include "slr/problem.hpp"
#include "slr/prox.hpp"
#include "slr/ssn.hpp"

// Dual Newton proximal point algorithm (PPDNA).
//
// Outer loop: a preconditioned proximal point step on (w, v) with weights
// 1/sigma_k on w and 1/gamma_k on v. Each step is solved through its dual in
// u by semismooth Newton; (w, v, y) are then recovered in closed form.

namespace slr {

using Schedule = std::function<double(int)>;

/// 9 / k^1.01, k counted from 1.
inline double default_tolerance_schedule(int k) { return 9.0 / std::pow(static_cast<double>(k), 1.01); }

struct PpdnaConfig {
  double sigma0 = 0.0;  // <= 0 selects 40 / lambda
  double gamma0 = 0.0;  // <= 0 selects 40 / lambda
  double sigma_cap = 5e4;
  double rho_growth = 1.01;
  double rho_trigger = 0.01;
  Schedule eps_schedule = default_tolerance_schedule;
  Schedule delta_schedule = default_tolerance_schedule;
  double delta_clamp = 0.999;
  double tol = 1e-6;
  int max_outer = 500;
  SsnConfig ssn;

  void validate() const {
    if (!(tol > 0.0)) throw InvalidArgument("ppdna: tol must be positive");
    if (max_outer < 1) throw InvalidArgument("ppdna: max_outer must be positive");
    if (!(delta_clamp >= 0.0 && delta_clamp < 1.0)) throw InvalidArgument("ppdna: delta clamp must be in [0, 1)");
    if (!eps_schedule || !delta_schedule) throw InvalidArgument("ppdna: schedules must be set");
    ssn.validate();
  }
};

/// Relative KKT residuals used as the termination measure.
struct KktReport {
  double rkkt1 = 0.0;  // max(prox residual / (1 + ||w|| + ||A^T u||), |1^T u| / (1 + |1^T u|))
  double rkkt2 = 0.0;  // ||y - A w - v 1|| / (1 + ||y|| + ||A w + v 1||)
  double total = 0.0;
};

/// One outer iterate (w^k, v^k, u^k, y^k) with the proximal weights in force.
struct OuterState {
  Vector w;
  double v = 0.0;
  Vector u;
  Vector y;
  int k = 0;
  double sigma = 1.0;
  double gamma = 1.0;
  std::optional<double> last_rkkt1;
};

struct InitialPoint {
  Vector w;
  double v = 0.0;
  Vector u;
};

/// Diagnostic record emitted after every outer iteration.
struct OuterIterationLog {
  int k = 0;              // 1-based outer iteration
  int inner = 0;          // Newton steps in this iteration
  double gap = 0.0;       // f_k + psi_k at acceptance
  KktReport kkt;
  double sigma = 0.0;     // weights used in this iteration
  double gamma = 0.0;
  bool stagnated = false;
};

using OuterObserver = std::function<void(const OuterIterationLog&)>;

struct Solution {
  Vector w;
  double v = 0.0;
  Vector y;
  Vector u;
  KktReport kkt;
  int outer_iters = 0;
  int inner_iters_total = 0;
  double wall_time = 0.0;  // seconds
  bool converged = false;
  double objective = 0.0;
  // invariant bookkeeping
  double min_gap = 0.0;
  int gap_violations = 0;       // accepted inner points with f_k + psi_k < -1e-10
  int domain_violations = 0;    // SSN iterates outside dom h*
  int residual_violations = 0;  // Newton solves above their forcing bound
  int y_violations = 0;         // ||grad h(y) - u||_inf > 1e-10
  int tolerance_halvings = 0;   // times the acceptance test sent the run on with tol / 2
};

/// Extra test applied whenever the relative KKT target is met. Arguments are
/// (w, v, y, u, A^T u, A w + v 1). A rejection halves the relative tolerance
/// and the outer loop carries on from where it is.
using AcceptTest =
    std::function<bool(const Vector&, double, const Vector&, const Vector&, const Vector&, const Vector&)>;

struct AcceptRule {
  AcceptTest test;
  int max_halvings = 40;
};

/// f_k(w, v) = h(A w + v 1) + lambda ||w||_1 + (||w - w^k||^2 + (sigma/gamma)(v - v^k)^2) / (2 sigma).
inline double fk_value(const Vector& w, double v, const Vector& w_anchor, double v_anchor, double sigma, double gamma,
                       const ProblemInstance& inst) {
  if (w.size() != inst.n() || w_anchor.size() != inst.n()) throw ShapeError("fk_value: w length != n");
  const double prox_term = (w - w_anchor).squaredNorm() + (sigma / gamma) * (v - v_anchor) * (v - v_anchor);
  return primal_objective(w, v, inst) + prox_term / (2.0 * sigma);
}

struct PrimalUpdate {
  Vector w;
  double v = 0.0;
  Vector y;
};

/// Closed-form (w^{k+1}, v^{k+1}, y^{k+1}) from the dual solution u^{k+1}.
inline PrimalUpdate primal_update(const Vector& u_next, const OuterState& state, const ProblemInstance& inst) {
  require_conj_domain(u_next, inst.b(), "primal_update");
  PrimalUpdate p;
  p.w = soft_threshold(state.w - state.sigma * inst.A().multiply_transpose(u_next), state.sigma * inst.lambda());
  p.v = state.v - state.gamma * u_next.sum();
  p.y = recover_y(u_next, inst.b());
  return p;
}

/// Weighted step norm ||(w1; v1) - (w0; v0)||^2_M with M = Diag(1_n; sigma/gamma).
inline double weighted_step_sq(const Vector& w1, double v1, const Vector& w0, double v0, double sigma, double gamma) {
  return (w1 - w0).squaredNorm() + (sigma / gamma) * (v1 - v0) * (v1 - v0);
}

/// Both implementable inner criteria on the duality gap f_k + psi_k:
///   gap <= eps_k^2 / (2 sigma)   and   gap <= delta_k^2 / (2 sigma) * ||step||_M^2.
inline bool inner_criteria_hold(double gap, double step_sq, double eps_k, double delta_k, double sigma) {
  return gap <= eps_k * eps_k / (2.0 * sigma) && gap <= delta_k * delta_k / (2.0 * sigma) * step_sq;
}

inline bool inner_stop_check(const Vector& w_next, double v_next, const Vector& u_next, const OuterState& state,
                             double eps_k, double delta_k, const ProblemInstance& inst) {
  const Subproblem sub{inst, state.w, state.v, state.sigma, state.gamma};
  const double gap = fk_value(w_next, v_next, state.w, state.v, state.sigma, state.gamma, inst) + psi_value(u_next, sub);
  const double step = weighted_step_sq(w_next, v_next, state.w, state.v, state.sigma, state.gamma);
  return inner_criteria_hold(gap, step, eps_k, delta_k, state.sigma);
}

struct PenaltyUpdate {
  double sigma;
  double gamma;
};

/// sigma, gamma grow by rho_growth (capped) when R_kkt1 shrank by more than the trigger ratio.
inline PenaltyUpdate sigma_gamma_update(const OuterState& state, double rkkt1_now, const PpdnaConfig& cfg) {
  double ratio = 1.0;
  if (state.last_rkkt1 && *state.last_rkkt1 > 0.0) ratio = rkkt1_now / *state.last_rkkt1;
  const double rho = ratio < cfg.rho_trigger ? cfg.rho_growth : 1.0;
  return {std::min(cfg.sigma_cap, rho * state.sigma), std::min(cfg.sigma_cap, rho * state.gamma)};
}

namespace detail {

inline KktReport kkt_from_parts(const Vector& w, const Vector& atu, const Vector& margin, const Vector& y, double sum_u,
                                double lambda) {
  KktReport r;
  const double prox_res = (w - soft_threshold(w - atu, lambda)).norm();
  r.rkkt1 = std::max(prox_res / (1.0 + w.norm() + atu.norm()), std::abs(sum_u) / (1.0 + std::abs(sum_u)));
  r.rkkt2 = (y - margin).norm() / (1.0 + y.norm() + margin.norm());
  r.total = std::max(r.rkkt1, r.rkkt2);
  return r;
}

}  // namespace detail

inline KktReport kkt_residual_rel(const Vector& w, double v, const Vector& y, const Vector& u,
                                  const ProblemInstance& inst) {
  if (w.size() != inst.n() || y.size() != inst.m() || u.size() != inst.m()) throw ShapeError("kkt_residual_rel: shape");
  return detail::kkt_from_parts(w, inst.A().multiply_transpose(u), margins(inst.A(), w, v), y, u.sum(),
                                inst.lambda());
}

/// Default starting point (0, 0, -2e-7 b / m).
inline InitialPoint default_initial_point(const ProblemInstance& inst) {
  return {Vector::Zero(inst.n()), 0.0, -2e-7 * inst.b() / static_cast<double>(inst.m())};
}

/// Run PPDNA until R_kkt <= cfg.tol or cfg.max_outer iterations.
///
/// On exhaustion the last iterate is returned with `converged == false`.
inline Solution ppdna_solve(const ProblemInstance& inst, const std::optional<InitialPoint>& init,
                            const PpdnaConfig& cfg, const OuterObserver& observer = {},
                            const AcceptRule& accept = {}) {
  cfg.validate();
  if (!(inst.lambda() > 0.0)) throw InvalidArgument("ppdna: lambda must be positive");
  const auto t0 = std::chrono::steady_clock::now();

  const InitialPoint start = init ? *init : default_initial_point(inst);
  if (start.w.size() != inst.n() || start.u.size() != inst.m()) throw ShapeError("ppdna: initial point shape");
  require_conj_domain(start.u, inst.b(), "ppdna initial point");

  OuterState st;
  st.w = start.w;
  st.v = start.v;
  st.u = start.u;
  st.y = recover_y(st.u, inst.b());
  st.sigma = cfg.sigma0 > 0.0 ? cfg.sigma0 : 40.0 / inst.lambda();
  st.gamma = cfg.gamma0 > 0.0 ? cfg.gamma0 : 40.0 / inst.lambda();

  Solution sol;
  sol.min_gap = std::numeric_limits<double>::infinity();
  KktReport kkt;
  double tol = cfg.tol;
  // true when the relative target is met and the acceptance test (if any) agrees;
  // a rejection tightens tol, or ends the run once the halving budget is spent
  bool give_up = false;
  auto done = [&](const Vector& atu, const Vector& margin) {
    while (kkt.total <= tol) {
      if (!accept.test || accept.test(st.w, st.v, st.y, st.u, atu, margin)) return true;
      if (sol.tolerance_halvings >= accept.max_halvings) {
        give_up = true;
        return false;
      }
      tol *= 0.5;
      ++sol.tolerance_halvings;
    }
    return false;
  };
  // a supplied starting point may already be good enough
  if (init) {
    const Vector atu = inst.A().multiply_transpose(st.u);
    const Vector margin = margins(inst.A(), st.w, st.v);
    kkt = detail::kkt_from_parts(st.w, atu, margin, st.y, st.u.sum(), inst.lambda());
    sol.converged = done(atu, margin);
  }

  while (!sol.converged && !give_up && st.k < cfg.max_outer) {
    const int k1 = st.k + 1;
    const double eps_k = cfg.eps_schedule(k1);
    const double delta_k = std::min(cfg.delta_schedule(k1), cfg.delta_clamp);
    const Subproblem sub{inst, st.w, st.v, st.sigma, st.gamma};

    double gap = 0.0;
    auto stop = [&](const DualEvaluation& e) {
      const double prox_term = weighted_step_sq(e.w, e.v, st.w, st.v, st.sigma, st.gamma);
      Vector x = e.aw;
      x.array() += e.v;
      const double fk = logistic_loss(x, inst.b()) + inst.lambda() * e.w.lpNorm<1>() + prox_term / (2.0 * st.sigma);
      gap = fk + e.psi;
      return inner_criteria_hold(gap, prox_term, eps_k, delta_k, st.sigma);
    };
    SsnResult inner = ssn_solve(sub, st.u, cfg.ssn, stop);
    if (inner.stagnated) {
      // stop() was not evaluated at the final point
      stop(inner.final);
    }

    sol.inner_iters_total += inner.iterations;
    sol.domain_violations += inner.domain_violations;
    sol.residual_violations += inner.residual_violations;
    sol.min_gap = std::min(sol.min_gap, gap);
    if (gap < -1e-10) ++sol.gap_violations;

    // closed-form primal recovery, already computed inside the evaluation
    DualEvaluation& e = inner.final;
    st.w = std::move(e.w);
    st.v = e.v;
    st.u = std::move(e.u);
    st.y = std::move(e.y);
    if ((logistic_loss_grad(st.y, inst.b()) - st.u).lpNorm<Eigen::Infinity>() > 1e-10) ++sol.y_violations;

    Vector margin = e.aw;
    margin.array() += st.v;
    const Vector atu = inst.A().multiply_transpose(st.u);
    kkt = detail::kkt_from_parts(st.w, atu, margin, st.y, st.u.sum(), inst.lambda());
    ++st.k;

    if (observer) observer({st.k, inner.iterations, gap, kkt, st.sigma, st.gamma, inner.stagnated});

    if (done(atu, margin)) {
      sol.converged = true;
      break;
    }
    const PenaltyUpdate next = sigma_gamma_update(st, kkt.rkkt1, cfg);
    st.sigma = next.sigma;
    st.gamma = next.gamma;
    st.last_rkkt1 = kkt.rkkt1;
  }

  if (!std::isfinite(sol.min_gap)) sol.min_gap = 0.0;
  sol.w = std::move(st.w);
  sol.v = st.v;
  sol.u = std::move(st.u);
  sol.y = std::move(st.y);
  sol.kkt = kkt;
  sol.outer_iters = st.k;
  sol.objective = primal_objective(sol.w, sol.v, inst);
  sol.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return sol;
}

}  // namespace slr
