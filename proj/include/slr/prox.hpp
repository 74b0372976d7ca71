#pragma once

#include <cmath>

#include "slr/design_matrix.hpp"
#include "slr/errors.hpp"

namespace slr {

/// Prox of t||.||_1: sgn(x) max(|x| - t, 0). Ties |x_i| == t go to 0.
inline Vector soft_threshold(const Vector& x, double t) {
  if (!(t >= 0.0)) throw InvalidArgument("soft_threshold: negative threshold");
  Vector out(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const double a = std::abs(x[i]) - t;
    out[i] = a > 0.0 ? std::copysign(a, x[i]) : 0.0;
  }
  return out;
}

/// Prox of s^T|.| for a strictly positive weight vector s.
inline Vector weighted_soft_threshold(const Vector& x, const Vector& s) {
  if (x.size() != s.size()) throw ShapeError("weighted_soft_threshold: length mismatch");
  Vector out(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    if (!(s[i] > 0.0)) throw InvalidArgument("weighted_soft_threshold: weights must be positive");
    const double a = std::abs(x[i]) - s[i];
    out[i] = a > 0.0 ? std::copysign(a, x[i]) : 0.0;
  }
  return out;
}

/// Moreau envelope of t||.||_1 at x; a Huber function per coordinate.
inline double moreau_env_l1(const Vector& x, double t) {
  if (!(t >= 0.0)) throw InvalidArgument("moreau_env_l1: negative threshold");
  double sum = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    const double a = std::abs(x[i]);
    sum += a <= t ? 0.5 * a * a : t * (a - t) + 0.5 * t * t;
  }
  return sum;
}

}  // namespace slr
