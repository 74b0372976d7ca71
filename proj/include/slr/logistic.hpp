#pragma once

#include <cmath>
#include <string>

#include "slr/design_matrix.hpp"
#include "slr/errors.hpp"
#include "slr/problem.hpp"

// Logistic loss h(x) = (1/m) sum log(1 + exp(-b_i x_i)) and its conjugate.
//
// On dom h* every dual coordinate is parameterized by t_i = -m u_i b_i in
// (0, 1). In that variable
//   h*(u)     = (1/m) sum (1 - t) log(1 - t) + t log t
//   grad h*   = b_i (log(1 - t) - log t)
//   hess h*   = m / (t (1 - t))
// which are the textbook formulas rewritten so that no intermediate overflows.

namespace slr {

namespace detail {

inline void require_same_length(const Vector& x, const Vector& b, const char* what) {
  if (x.size() != b.size()) throw ShapeError(std::string(what) + ": length mismatch");
}

/// log(1 + exp(s)) without overflow.
inline double log1pexp(double s) { return s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)); }

}  // namespace detail

/// Default slack (times 1/m) kept away from both faces of dom h*.
inline constexpr double kConjDomainGuard = 1e-15;

/// True iff -1/m + g < u_i b_i < -g for every i, with g = guard / m.
inline bool in_conj_domain(const Vector& u, const Vector& b, double guard = kConjDomainGuard) {
  if (u.size() != b.size()) return false;
  const double m = static_cast<double>(u.size());
  const double g = guard / m;
  for (Index i = 0; i < u.size(); ++i) {
    const double s = u[i] * b[i];
    if (!(s > -1.0 / m + g && s < -g)) return false;
  }
  return true;
}

inline void require_conj_domain(const Vector& u, const Vector& b, const char* what) {
  detail::require_same_length(u, b, what);
  if (!in_conj_domain(u, b)) throw DomainError(std::string(what) + ": dual point outside dom h*");
}

inline double logistic_loss(const Vector& x, const Vector& b) {
  detail::require_same_length(x, b, "logistic_loss");
  double sum = 0.0;
  for (Index i = 0; i < x.size(); ++i) sum += detail::log1pexp(-b[i] * x[i]);
  return sum / static_cast<double>(x.size());
}

/// grad h(x)_i = -b_i / (m (1 + exp(b_i x_i))).
inline Vector logistic_loss_grad(const Vector& x, const Vector& b) {
  detail::require_same_length(x, b, "logistic_loss_grad");
  const double m = static_cast<double>(x.size());
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const double s = b[i] * x[i];
    // sigmoid(-s) computed on the branch that keeps exp() bounded
    const double sig = s >= 0.0 ? std::exp(-s) / (1.0 + std::exp(-s)) : 1.0 / (1.0 + std::exp(s));
    g[i] = -b[i] * sig / m;
  }
  return g;
}

inline double conj_value(const Vector& u, const Vector& b) {
  require_conj_domain(u, b, "conj_value");
  const double m = static_cast<double>(u.size());
  double sum = 0.0;
  for (Index i = 0; i < u.size(); ++i) {
    const double t = -m * u[i] * b[i];
    sum += (1.0 - t) * std::log1p(-t) + t * std::log(t);
  }
  return sum / m;
}

inline Vector conj_grad(const Vector& u, const Vector& b) {
  require_conj_domain(u, b, "conj_grad");
  const double m = static_cast<double>(u.size());
  Vector g(u.size());
  for (Index i = 0; i < u.size(); ++i) {
    const double t = -m * u[i] * b[i];
    g[i] = b[i] * (std::log1p(-t) - std::log(t));
  }
  return g;
}

/// Diagonal of the conjugate Hessian; strictly positive on dom h*.
inline Vector conj_hess_diag(const Vector& u, const Vector& b) {
  require_conj_domain(u, b, "conj_hess_diag");
  const double m = static_cast<double>(u.size());
  Vector d(u.size());
  for (Index i = 0; i < u.size(); ++i) {
    const double t = -m * u[i] * b[i];
    d[i] = m / (t * (1.0 - t));
  }
  return d;
}

/// The margin vector y with grad h(y) = u.
inline Vector recover_y(const Vector& u, const Vector& b) { return conj_grad(u, b); }

/// A w + v 1
inline Vector margins(const DesignMatrix& a, const Vector& w, double v) {
  Vector x = a.multiply(w);
  x.array() += v;
  return x;
}

inline double primal_objective(const Vector& w, double v, const ProblemInstance& inst) {
  if (w.size() != inst.n()) throw ShapeError("primal_objective: w length != n");
  return logistic_loss(margins(inst.A(), w, v), inst.b()) + inst.lambda() * w.lpNorm<1>();
}

struct ClassCounts {
  Index positive = 0;
  Index negative = 0;
};

inline ClassCounts count_classes(const Vector& b) {
  ClassCounts c;
  for (Index i = 0; i < b.size(); ++i) (b[i] > 0.0 ? c.positive : c.negative)++;
  return c;
}

/// Intercept of the all-zero-weights optimum, log(m+/m-).
inline double null_intercept(const Vector& b) {
  const ClassCounts c = count_classes(b);
  if (c.positive == 0 || c.negative == 0) throw InvalidArgument("both classes must be present");
  if (c.positive == c.negative) return 0.0;
  return std::log(static_cast<double>(c.positive) / static_cast<double>(c.negative));
}

/// Smallest lambda for which w = 0 is optimal:
///   || (1/m) A^T (b o (1 - p)) ||_inf,  p_i = 1 / (1 + exp(-b_i v0)),  v0 = log(m+/m-).
inline double lambda_max(const DesignMatrix& a, const Vector& b) {
  if (a.rows() != b.size()) throw ShapeError("lambda_max: labels length != rows");
  check_labels(b);
  const double v0 = null_intercept(b);
  const double m = static_cast<double>(b.size());
  Vector r(b.size());
  for (Index i = 0; i < b.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-b[i] * v0));
    r[i] = b[i] * (1.0 - p);
  }
  return a.multiply_transpose(r).lpNorm<Eigen::Infinity>() / m;
}

}  // namespace slr
