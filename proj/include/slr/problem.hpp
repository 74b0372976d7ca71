#pragma once

#include <memory>
#include <utility>

#include "slr/design_matrix.hpp"
#include "slr/errors.hpp"

namespace slr {

/// Labels must be exactly -1 or +1.
inline void check_labels(const Vector& b) {
  for (Index i = 0; i < b.size(); ++i) {
    if (b[i] != 1.0 && b[i] != -1.0) throw InvalidArgument("labels must be -1 or +1");
  }
}

/// Design matrix, labels and regularization weight of one l1-logistic problem.
///
/// The matrix is shared so that a path over many lambdas, or the reduced
/// problems built while sieving, never copy the full data.
class ProblemInstance {
 public:
  ProblemInstance(std::shared_ptr<const DesignMatrix> a, Vector b, double lambda)
      : a_(std::move(a)), b_(std::move(b)), lambda_(lambda) {
    if (!a_) throw InvalidArgument("null design matrix");
    if (a_->rows() != b_.size()) throw ShapeError("labels length != number of rows");
    if (b_.size() == 0) throw InvalidArgument("no samples");
    check_labels(b_);
    if (!(lambda_ >= 0.0)) throw InvalidArgument("lambda must be nonnegative");
  }

  ProblemInstance(DesignMatrix a, Vector b, double lambda)
      : ProblemInstance(std::make_shared<const DesignMatrix>(std::move(a)), std::move(b), lambda) {}

  const DesignMatrix& A() const { return *a_; }
  const std::shared_ptr<const DesignMatrix>& shared_A() const { return a_; }
  const Vector& b() const { return b_; }
  double lambda() const { return lambda_; }
  Index m() const { return a_->rows(); }
  Index n() const { return a_->cols(); }

  ProblemInstance with_lambda(double lambda) const { return {a_, b_, lambda}; }

 private:
  std::shared_ptr<const DesignMatrix> a_;
  Vector b_;
  double lambda_;
};

}  // namespace slr
