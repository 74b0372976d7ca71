#pragma once

#include <cmath>
#include <utility>

#include "slr/errors.hpp"
#include "slr/logistic.hpp"
#include "slr/ppdna.hpp"
#include "slr/problem.hpp"
#include "slr/prox.hpp"

// Accelerated proximal gradient (FISTA with backtracking and restart) on
// (w, v). Slow but simple; kept as an independent check on PPDNA.

namespace slr {

struct BaselineConfig {
  double tol = 1e-8;           // relative KKT target
  long max_iters = 2'000'000;
  double initial_step = 0.0;   // <= 0: 1 / L with L = (||A||_F^2 + m) / (4m)
  double backtrack_ratio = 0.5;
  double step_growth = 1.25;   // optimistic step increase tried at every iteration
  int check_every = 10;

  void validate() const {
    if (!(tol > 0.0)) throw InvalidArgument("baseline: tol must be positive");
    if (!(backtrack_ratio > 0.0 && backtrack_ratio < 1.0)) throw InvalidArgument("baseline: backtrack ratio in (0,1)");
    if (!(step_growth >= 1.0)) throw InvalidArgument("baseline: step growth must be >= 1");
  }
};

struct BaselineResult {
  Vector w;
  double v = 0.0;
  double objective = 0.0;
  KktReport kkt;
  long iterations = 0;
  bool converged = false;
};

inline BaselineResult prox_grad_solve(const ProblemInstance& inst, const BaselineConfig& cfg = {}) {
  cfg.validate();
  const DesignMatrix& a = inst.A();
  const Vector& b = inst.b();
  const double lambda = inst.lambda();
  const double m = static_cast<double>(inst.m());

  // smooth part and its gradient in (w, v)
  auto smooth = [&](const Vector& w, double v, Vector* gw, double* gv) {
    const Vector x = margins(a, w, v);
    if (gw) {
      const Vector g = logistic_loss_grad(x, b);
      *gw = a.multiply_transpose(g);
      *gv = g.sum();
    }
    return logistic_loss(x, b);
  };

  double step = cfg.initial_step > 0.0 ? cfg.initial_step : 4.0 * m / (a.frobenius_norm_squared() + m);

  Vector w = Vector::Zero(inst.n());
  double v = null_intercept(b);
  Vector zw = w;  // extrapolated point
  double zv = v;
  double t = 1.0;
  double obj = smooth(w, v, nullptr, nullptr) + lambda * w.lpNorm<1>();

  BaselineResult res;
  Vector gw;
  double gv = 0.0;
  for (res.iterations = 0; res.iterations < cfg.max_iters; ++res.iterations) {
    if (res.iterations % cfg.check_every == 0) {
      const Vector x = margins(a, w, v);
      const Vector u = logistic_loss_grad(x, b);
      res.kkt = kkt_residual_rel(w, v, x, u, inst);
      if (res.kkt.total <= cfg.tol) {
        res.converged = true;
        break;
      }
    }

    const double fz = smooth(zw, zv, &gw, &gv);
    Vector w_next;
    double v_next = 0.0;
    double f_next = 0.0;
    step *= cfg.step_growth;
    for (int bt = 0;; ++bt) {
      w_next = soft_threshold(zw - step * gw, step * lambda);
      v_next = zv - step * gv;
      f_next = smooth(w_next, v_next, nullptr, nullptr);
      const double dv = v_next - zv;
      const Vector dw = w_next - zw;
      const double model = fz + gw.dot(dw) + gv * dv + (dw.squaredNorm() + dv * dv) / (2.0 * step);
      if (f_next <= model + 1e-15 * std::abs(fz)) break;
      if (bt > 60) throw ConvergenceError("baseline: backtracking failed");
      step *= cfg.backtrack_ratio;
    }

    const double obj_next = f_next + lambda * w_next.lpNorm<1>();
    if (obj_next > obj && t > 1.0) {
      // restart momentum from the last iterate; a step without momentum is
      // always taken, otherwise rounding near the optimum could stall here
      t = 1.0;
      zw = w;
      zv = v;
      continue;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double beta = (t - 1.0) / t_next;
    zw = w_next + beta * (w_next - w);
    zv = v_next + beta * (v_next - v);
    w = std::move(w_next);
    v = v_next;
    obj = obj_next;
    t = t_next;
  }
  if (!res.converged) throw ConvergenceError("baseline: iteration cap reached");
  res.w = std::move(w);
  res.v = v;
  res.objective = primal_objective(res.w, res.v, inst);
  return res;
}

}  // namespace slr
