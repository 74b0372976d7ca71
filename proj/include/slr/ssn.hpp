#pragma once

#include <Eigen/Cholesky>

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "slr/design_matrix.hpp"
#include "slr/errors.hpp"
#include "slr/logistic.hpp"
#include "slr/problem.hpp"
#include "slr/prox.hpp"

// Semismooth Newton method for the dual proximal subproblem
//
//   min_{u in dom h*} psi(u) = h*(u) + (||Prox(w~ - sigma A^T u)||^2 - ||w~||^2) / (2 sigma)
//                              + ((v~ - gamma 1^T u)^2 - v~^2) / (2 gamma)
//
// where Prox is soft thresholding at sigma*lambda. The middle term is the
// Moreau-envelope expression -(1/sigma) E(x) + ||x||^2/(2 sigma) collapsed
// to ||Prox(x)||^2/(2 sigma), which avoids cancelling two large numbers.

namespace slr {

/// Which linear solver produces the Newton direction.
enum class NewtonBackend {
  automatic,  ///< smw when r+1 <= ratio*m, reduced when m <= dense_cap, else cg
  smw,        ///< Sherman-Morrison-Woodbury on the (r+1)x(r+1) Gram system
  reduced,    ///< Cholesky of the m x m matrix assembled from A_J only
  dense,      ///< Cholesky of the m x m matrix assembled from all of A (reference)
  cg,         ///< matrix-free conjugate gradients
};

inline const char* to_string(NewtonBackend b) {
  switch (b) {
    case NewtonBackend::automatic: return "automatic";
    case NewtonBackend::smw: return "smw";
    case NewtonBackend::reduced: return "reduced";
    case NewtonBackend::dense: return "dense";
    case NewtonBackend::cg: return "cg";
  }
  return "?";
}

struct SsnConfig {
  double mu = 0.01;        // Armijo slope, in (0, 1/2)
  double eta = 0.6;        // backtracking ratio, in (0, 1)
  double tau_bar = 0.1;    // forcing exponent, in (0, 1)
  double eta_bar = 0.005;  // forcing cap, in (0, 1)
  int max_newton_iters = 100;
  int max_linesearch_steps = 60;
  int max_cg_iters = 1000;
  double smw_ratio_threshold = 1.0;
  Index dense_cap = 4000;
  NewtonBackend backend = NewtonBackend::automatic;
  // Line-search iterates keep u_i b_i inside (-1/m + g, -g), g = domain_guard / m.
  double domain_guard = 1e-14;
  // ||grad psi|| <= stagnation_tol * (1 + ||y||) is treated as solved: below
  // this level psi differences are pure rounding and Armijo cannot decide.
  double stagnation_tol = 1e-13;

  void validate() const {
    if (!(mu > 0.0 && mu < 0.5)) throw InvalidArgument("ssn: mu must be in (0, 1/2)");
    if (!(eta > 0.0 && eta < 1.0)) throw InvalidArgument("ssn: eta must be in (0, 1)");
    if (!(tau_bar > 0.0 && tau_bar < 1.0)) throw InvalidArgument("ssn: tau_bar must be in (0, 1)");
    if (!(eta_bar > 0.0 && eta_bar < 1.0)) throw InvalidArgument("ssn: eta_bar must be in (0, 1)");
    if (max_newton_iters < 1 || max_linesearch_steps < 1) throw InvalidArgument("ssn: iteration caps must be positive");
  }
};

/// Anchor (w~, v~) and proximal weights of one outer iteration.
struct Subproblem {
  const ProblemInstance& inst;
  Vector w_tilde;
  double v_tilde = 0.0;
  double sigma = 1.0;
  double gamma = 1.0;

  void validate() const {
    if (w_tilde.size() != inst.n()) throw ShapeError("subproblem: w_tilde length != n");
    if (!(sigma > 0.0) || !(gamma > 0.0)) throw InvalidArgument("subproblem: sigma and gamma must be positive");
  }
};

/// Sorted coordinates where the soft-threshold is strictly active.
struct ActiveSet {
  std::vector<Index> indices;
  Index size() const { return static_cast<Index>(indices.size()); }
};

/// psi, its gradient, and the primal candidates it implies, at one dual point.
struct DualEvaluation {
  Vector u;
  Vector atu;        // A^T u
  Vector prox_arg;   // w~ - sigma A^T u
  Vector w;          // Prox(prox_arg): candidate w^{k+1}
  double v = 0.0;    // v~ - gamma 1^T u: candidate v^{k+1}
  Vector aw;         // A w
  Vector y;          // grad h*(u)
  double sum_u = 0.0;
  double psi = 0.0;
  Vector grad;       // y - A w - v 1
  double grad_norm = 0.0;
};

namespace detail {

inline double psi_from_parts(double conj, const Vector& prox, double sum_u, const Subproblem& s) {
  return conj + (prox.squaredNorm() - s.w_tilde.squaredNorm()) / (2.0 * s.sigma) - s.v_tilde * sum_u +
         0.5 * s.gamma * sum_u * sum_u;
}

}  // namespace detail

inline DualEvaluation evaluate_dual(const Subproblem& sub, const Vector& u) {
  sub.validate();
  const ProblemInstance& inst = sub.inst;
  require_conj_domain(u, inst.b(), "psi");
  DualEvaluation e;
  e.u = u;
  e.atu = inst.A().multiply_transpose(u);
  e.prox_arg = sub.w_tilde - sub.sigma * e.atu;
  e.w = soft_threshold(e.prox_arg, sub.sigma * inst.lambda());
  e.sum_u = u.sum();
  e.v = sub.v_tilde - sub.gamma * e.sum_u;
  e.aw = inst.A().multiply(e.w);
  e.y = conj_grad(u, inst.b());
  e.grad = e.y - e.aw;
  e.grad.array() -= e.v;
  e.grad_norm = e.grad.norm();
  e.psi = detail::psi_from_parts(conj_value(u, inst.b()), e.w, e.sum_u, sub);
  return e;
}

inline double psi_value(const Vector& u, const Subproblem& sub) {
  sub.validate();
  require_conj_domain(u, sub.inst.b(), "psi_value");
  const Vector atu = sub.inst.A().multiply_transpose(u);
  const Vector p = soft_threshold(sub.w_tilde - sub.sigma * atu, sub.sigma * sub.inst.lambda());
  return detail::psi_from_parts(conj_value(u, sub.inst.b()), p, u.sum(), sub);
}

inline Vector psi_grad(const Vector& u, const Subproblem& sub) { return evaluate_dual(sub, u).grad; }

/// J = { j : |(w~ - sigma A^T u)_j| > sigma lambda } from an already formed prox argument.
inline ActiveSet active_set_from(const Vector& prox_arg, double threshold) {
  ActiveSet j;
  for (Index i = 0; i < prox_arg.size(); ++i) {
    if (std::abs(prox_arg[i]) > threshold) j.indices.push_back(i);
  }
  return j;
}

inline ActiveSet active_set(const Vector& u, const Subproblem& sub) {
  sub.validate();
  require_conj_domain(u, sub.inst.b(), "active_set");
  const Vector x = sub.w_tilde - sub.sigma * sub.inst.A().multiply_transpose(u);
  return active_set_from(x, sub.sigma * sub.inst.lambda());
}

/// Generalized Hessian H = Diag(hess h*) + sigma A_J A_J^T + gamma 1 1^T, as an operator.
class NewtonOperator {
 public:
  NewtonOperator(Vector hess_diag, const DesignMatrix& a, const ActiveSet& j, double sigma, double gamma)
      : hess_diag_(std::move(hess_diag)), a_(a), j_(j), sigma_(sigma), gamma_(gamma) {
    mask_ = Vector::Zero(a.cols());
    for (Index k : j.indices) mask_[k] = 1.0;
  }

  Index size() const { return hess_diag_.size(); }
  const Vector& hess_diag() const { return hess_diag_; }
  const ActiveSet& active() const { return j_; }
  double sigma() const { return sigma_; }
  double gamma() const { return gamma_; }
  const DesignMatrix& matrix() const { return a_; }

  /// The m x r block A_J, extracted on first use.
  const DenseMatrix& active_columns() const {
    if (!aj_) aj_ = a_.dense_columns(j_.indices);
    return *aj_;
  }

  /// A_J kept sparse (sparse matrices only).
  const SparseRowMatrix& sparse_active_columns() const {
    if (!aj_sparse_) aj_sparse_ = a_.sparse_columns(j_.indices);
    return *aj_sparse_;
  }

  Vector apply(const Vector& d) const {
    Vector out = hess_diag_.cwiseProduct(d);
    if (j_.size() > 0) {
      if (aj_) {
        out.noalias() += sigma_ * (*aj_ * (aj_->transpose() * d));
      } else if (aj_sparse_) {
        const Vector t = aj_sparse_->transpose() * d;
        out.noalias() += sigma_ * (*aj_sparse_ * t);
      } else {
        const Vector t = a_.multiply_transpose(d).cwiseProduct(mask_);
        out += sigma_ * a_.multiply(t);
      }
    }
    out.array() += gamma_ * d.sum();
    return out;
  }

 private:
  Vector hess_diag_;
  const DesignMatrix& a_;
  const ActiveSet& j_;
  double sigma_;
  double gamma_;
  Vector mask_;
  mutable std::optional<DenseMatrix> aj_;
  mutable std::optional<SparseRowMatrix> aj_sparse_;
};

struct NewtonStep {
  Vector d;
  double residual = 0.0;  // ||H d + grad psi||
  NewtonBackend backend = NewtonBackend::automatic;
  int cg_iterations = 0;
};

namespace detail {

/// Cholesky of an SPD matrix whose lower triangle is filled; one jittered retry.
inline Eigen::LLT<DenseMatrix> factor_spd(DenseMatrix mat) {
  Eigen::LLT<DenseMatrix> llt(mat);
  if (llt.info() == Eigen::Success) return llt;
  const double jitter = 1e-12 * (1.0 + mat.diagonal().cwiseAbs().maxCoeff());
  mat.diagonal().array() += jitter;
  llt.compute(mat);
  if (llt.info() != Eigen::Success) throw FactorizationError("Newton system is not positive definite");
  return llt;
}

inline Vector solve_smw_dense(const NewtonOperator& op, const Vector& rhs, const Vector& linv) {
  const Index m = op.size();
  const Index r = op.active().size();
  DenseMatrix w(m, r + 1);
  if (r > 0) w.leftCols(r).noalias() = linv.asDiagonal() * op.active_columns();
  w.col(r) = std::sqrt(op.gamma() / op.sigma()) * linv;
  DenseMatrix gram = DenseMatrix::Zero(r + 1, r + 1);
  gram.selfadjointView<Eigen::Lower>().rankUpdate(w.transpose());
  gram.diagonal().array() += 1.0 / op.sigma();
  const auto llt = factor_spd(std::move(gram));
  const Vector rhat = linv.cwiseProduct(rhs);
  const Vector z = llt.solve(w.transpose() * rhat);
  Vector dhat = rhat - w * z;
  return linv.cwiseProduct(dhat);
}

/// Same system, with W kept as scaled sparse rows of A_J. The Gram matrix is
/// accumulated row by row, which costs sum_i nnz_i^2 / 2 instead of m r^2 / 2.
inline Vector solve_smw_sparse(const NewtonOperator& op, const Vector& rhs, const Vector& linv) {
  const Index m = op.size();
  const Index r = op.active().size();
  const SparseRowMatrix& aj = op.sparse_active_columns();
  const auto* start = aj.outerIndexPtr();
  const auto* pos = aj.innerIndexPtr();
  std::vector<double> val(aj.valuePtr(), aj.valuePtr() + aj.nonZeros());
  for (Index i = 0; i < m; ++i) {
    for (Index p = start[i]; p < start[i + 1]; ++p) val[static_cast<std::size_t>(p)] *= linv[i];
  }
  const Vector c = std::sqrt(op.gamma() / op.sigma()) * linv;

  DenseMatrix gram = DenseMatrix::Zero(r + 1, r + 1);
  double* g = gram.data();
  const Index ld = r + 1;
  for (Index i = 0; i < m; ++i) {
    const auto lo = static_cast<std::size_t>(start[i]);
    const auto hi = static_cast<std::size_t>(start[i + 1]);
    for (std::size_t p = lo; p < hi; ++p) {
      double* col = g + pos[p] * ld;  // column pos[p], rows >= pos[p]
      const double vp = val[p];
      for (std::size_t q = p; q < hi; ++q) col[pos[q]] += vp * val[q];
      g[pos[p] * ld + r] += c[i] * vp;
    }
  }
  gram(r, r) = c.squaredNorm();
  gram.diagonal().array() += 1.0 / op.sigma();
  const auto llt = factor_spd(std::move(gram));

  const Vector rhat = linv.cwiseProduct(rhs);
  Vector wt = Vector::Zero(r + 1);
  for (Index i = 0; i < m; ++i) {
    for (Index p = start[i]; p < start[i + 1]; ++p) {
      wt[pos[static_cast<std::size_t>(p)]] += val[static_cast<std::size_t>(p)] * rhat[i];
    }
  }
  wt[r] = c.dot(rhat);
  const Vector z = llt.solve(wt);
  Vector dhat = rhat - c * z[r];
  for (Index i = 0; i < m; ++i) {
    double acc = 0.0;
    for (Index p = start[i]; p < start[i + 1]; ++p) {
      acc += val[static_cast<std::size_t>(p)] * z[pos[static_cast<std::size_t>(p)]];
    }
    dhat[i] -= acc;
  }
  return linv.cwiseProduct(dhat);
}

inline Vector solve_smw(const NewtonOperator& op, const Vector& rhs) {
  const Vector linv = op.hess_diag().cwiseSqrt().cwiseInverse();
  // the scatter loop does not vectorize, so dense GEMM wins unless A is quite sparse
  const DesignMatrix& a = op.matrix();
  if (a.is_sparse() && static_cast<double>(a.sparse().nonZeros()) < 0.1 * static_cast<double>(a.rows()) * static_cast<double>(a.cols())) {
    return solve_smw_sparse(op, rhs, linv);
  }
  return solve_smw_dense(op, rhs, linv);
}

inline Vector solve_assembled(const NewtonOperator& op, const DenseMatrix& cols, const Vector& rhs) {
  // only the lower triangle is formed; LLT never reads the upper one
  const Index m = op.size();
  DenseMatrix h = DenseMatrix::Zero(m, m);
  if (cols.cols() > 0) h.selfadjointView<Eigen::Lower>().rankUpdate(cols, op.sigma());
  for (Index c = 0; c < m; ++c) h.col(c).tail(m - c).array() += op.gamma();
  h.diagonal() += op.hess_diag();
  return factor_spd(std::move(h)).solve(rhs);
}

inline Vector solve_dense_reference(const NewtonOperator& op, const Vector& rhs) {
  // sigma A U A^T with the full matrix and an explicit 0-1 diagonal U
  const DenseMatrix a = op.matrix().to_dense();
  Vector xi = Vector::Zero(a.cols());
  for (Index k : op.active().indices) xi[k] = 1.0;
  DenseMatrix h = op.sigma() * (a * xi.asDiagonal() * a.transpose());
  h.diagonal() += op.hess_diag();
  h.array() += op.gamma();
  return factor_spd(std::move(h)).solve(rhs);
}

inline Vector solve_cg(const NewtonOperator& op, const Vector& rhs, double tol, int max_iters, int& iters) {
  Vector x = Vector::Zero(rhs.size());
  Vector r = rhs;
  Vector p = r;
  double rs = r.squaredNorm();
  iters = 0;
  while (std::sqrt(rs) > tol && iters < max_iters) {
    const Vector ap = op.apply(p);
    const double alpha = rs / p.dot(ap);
    x += alpha * p;
    r -= alpha * ap;
    const double rs_next = r.squaredNorm();
    p = r + (rs_next / rs) * p;
    rs = rs_next;
    ++iters;
  }
  return x;
}

inline NewtonBackend choose_backend(const SsnConfig& cfg, Index m, Index r) {
  if (cfg.backend != NewtonBackend::automatic) return cfg.backend;
  if (static_cast<double>(r + 1) <= cfg.smw_ratio_threshold * static_cast<double>(m)) return NewtonBackend::smw;
  if (m <= cfg.dense_cap) return NewtonBackend::reduced;
  return NewtonBackend::cg;
}

}  // namespace detail

/// Solve H d = rhs with the backend chosen by `cfg` (cg stops at residual cg_tol).
inline NewtonStep solve_newton_system(const NewtonOperator& op, const Vector& rhs, double cg_tol,
                                      const SsnConfig& cfg) {
  NewtonStep step;
  step.backend = detail::choose_backend(cfg, op.size(), op.active().size());
  switch (step.backend) {
    case NewtonBackend::smw: step.d = detail::solve_smw(op, rhs); break;
    case NewtonBackend::reduced: step.d = detail::solve_assembled(op, op.active_columns(), rhs); break;
    case NewtonBackend::dense: step.d = detail::solve_dense_reference(op, rhs); break;
    case NewtonBackend::cg:
    case NewtonBackend::automatic:
      step.backend = NewtonBackend::cg;
      step.d = detail::solve_cg(op, rhs, cg_tol, cfg.max_cg_iters, step.cg_iterations);
      break;
  }
  if (!step.d.allFinite()) throw FactorizationError("Newton direction is not finite");
  step.residual = (op.apply(step.d) - rhs).norm();
  return step;
}

/// Newton direction for psi at u on the active set J.
inline NewtonStep newton_direction(const Vector& u, const ActiveSet& j, const Subproblem& sub, double cg_tol,
                                   const SsnConfig& cfg = {}) {
  const DualEvaluation e = evaluate_dual(sub, u);
  NewtonOperator op(conj_hess_diag(u, sub.inst.b()), sub.inst.A(), j, sub.sigma, sub.gamma);
  return solve_newton_system(op, -e.grad, cg_tol, cfg);
}

namespace detail {

/// Armijo backtracking from a precomputed evaluation; returns eta^c.
inline double line_search_from(const DualEvaluation& e, const Vector& d, const Subproblem& sub,
                               const SsnConfig& cfg) {
  const Vector& b = sub.inst.b();
  const double slope = e.grad.dot(d);
  if (!(slope < 0.0)) throw LineSearchError("line search: direction is not a descent direction");
  const Vector atd = sub.inst.A().multiply_transpose(d);
  const double sum_d = d.sum();
  const double threshold = sub.sigma * sub.inst.lambda();
  double alpha = 1.0;
  for (int c = 0; c < cfg.max_linesearch_steps; ++c, alpha *= cfg.eta) {
    const Vector trial = e.u + alpha * d;
    if (!in_conj_domain(trial, b, cfg.domain_guard)) continue;
    const Vector p = soft_threshold(sub.w_tilde - sub.sigma * (e.atu + alpha * atd), threshold);
    const double psi = psi_from_parts(conj_value(trial, b), p, e.sum_u + alpha * sum_d, sub);
    if (psi <= e.psi + cfg.mu * alpha * slope) return alpha;
  }
  throw LineSearchError("line search: no acceptable step within the step cap");
}

/// Newton step with every coordinate that would cross the domain guard at
/// unit length frozen. Falls back to steepest descent on the remaining
/// coordinates when the masked step is no longer a descent direction.
inline Vector guarded_direction(const DualEvaluation& e, const Vector& d, const Vector& b, double guard) {
  const double m = static_cast<double>(b.size());
  const double g = guard / m;
  Vector mask = Vector::Ones(d.size());
  for (Index i = 0; i < d.size(); ++i) {
    const double s = e.u[i] * b[i];
    const double ds = d[i] * b[i];
    const double room = ds > 0.0 ? (-g - s) / ds : ds < 0.0 ? (-1.0 / m + g - s) / ds : 1.0;
    if (room < 1.0) mask[i] = 0.0;
  }
  Vector out = d.cwiseProduct(mask);
  if (out.dot(e.grad) < 0.0) return out;
  return -e.grad.cwiseProduct(mask);
}

}  // namespace detail

/// Step length eta^c for the smallest c keeping u + eta^c d in dom h* with Armijo decrease.
inline double line_search(const Vector& u, const Vector& d, const Subproblem& sub, const SsnConfig& cfg = {}) {
  cfg.validate();
  if (d.size() != u.size()) throw ShapeError("line_search: direction length mismatch");
  return detail::line_search_from(evaluate_dual(sub, u), d, sub, cfg);
}

/// Thrown when the Newton cap is reached; carries the last iterate.
class SsnIterationLimit : public ConvergenceError {
 public:
  SsnIterationLimit(Vector last_u, int iterations)
      : ConvergenceError("ssn: iteration cap reached"), last_u_(std::move(last_u)), iterations_(iterations) {}
  const Vector& last_u() const { return last_u_; }
  int iterations() const { return iterations_; }

 private:
  Vector last_u_;
  int iterations_;
};

struct SsnResult {
  DualEvaluation final;          // evaluation at the returned iterate
  int iterations = 0;            // Newton steps taken
  bool stagnated = false;        // stopped on the rounding floor, not the caller's rule
  int residual_violations = 0;   // Newton solves that missed the forcing bound
  int domain_violations = 0;     // iterates outside dom h* (must stay 0)
  int guard_fallbacks = 0;       // steps taken with guard-blocked coordinates frozen
  std::vector<double> grad_norms;
  std::vector<double> psi_values;
  std::vector<NewtonBackend> backends;
};

using SsnStopRule = std::function<bool(const DualEvaluation&)>;

/// Semismooth Newton iterations u <- u + alpha d until `stop` accepts the current point.
inline SsnResult ssn_solve(const Subproblem& sub, const Vector& u0, const SsnConfig& cfg, const SsnStopRule& stop) {
  cfg.validate();
  SsnResult res;
  DualEvaluation e = evaluate_dual(sub, u0);
  const Vector& b = sub.inst.b();
  for (;;) {
    res.grad_norms.push_back(e.grad_norm);
    res.psi_values.push_back(e.psi);
    if (stop && stop(e)) break;
    if (e.grad_norm <= cfg.stagnation_tol * (1.0 + e.y.norm())) {
      res.stagnated = true;
      break;
    }
    if (res.iterations >= cfg.max_newton_iters) throw SsnIterationLimit(e.u, res.iterations);

    const ActiveSet j = active_set_from(e.prox_arg, sub.sigma * sub.inst.lambda());
    const double forcing = std::min(cfg.eta_bar, std::pow(e.grad_norm, 1.0 + cfg.tau_bar));
    NewtonOperator op(conj_hess_diag(e.u, b), sub.inst.A(), j, sub.sigma, sub.gamma);
    const NewtonStep step = solve_newton_system(op, -e.grad, forcing, cfg);
    if (step.residual > forcing) ++res.residual_violations;
    res.backends.push_back(step.backend);

    // when the full step leaves the domain, the step with the offending
    // coordinates frozen is tried as well and the better point kept; near the
    // guard the plain step can shrink to nothing because some coordinate
    // wants a margin that u cannot represent
    std::optional<DualEvaluation> taken;
    double alpha = 0.0;
    try {
      alpha = detail::line_search_from(e, step.d, sub, cfg);
      taken = evaluate_dual(sub, e.u + alpha * step.d);
    } catch (const LineSearchError&) {
    }
    if (!taken || !in_conj_domain(e.u + step.d, b, cfg.domain_guard)) {
      const Vector d = detail::guarded_direction(e, step.d, b, cfg.domain_guard);
      try {
        const double beta = detail::line_search_from(e, d, sub, cfg);
        DualEvaluation alt = evaluate_dual(sub, e.u + beta * d);
        if (!taken || alt.psi < taken->psi) {
          taken = std::move(alt);
          ++res.guard_fallbacks;
        }
      } catch (const LineSearchError&) {
        if (!taken) throw;
      }
    }
    if (!in_conj_domain(taken->u, b)) ++res.domain_violations;
    e = std::move(*taken);
    ++res.iterations;
  }
  res.final = std::move(e);
  return res;
}

}  // namespace slr
