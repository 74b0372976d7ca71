#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "slr/errors.hpp"

namespace slr {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using DenseMatrix = Eigen::MatrixXd;
using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using SparseColMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor>;

/// m x n feature matrix, one row per sample.
///
/// Storage is either compressed sparse row or dense (column-major). Every
/// product the solvers need goes through this class so that both layouts
/// share one code path. Sparse input also keeps a column-major copy so that
/// column subsets cost time proportional to their own nonzeros.
class DesignMatrix {
 public:
  DesignMatrix() : storage_(DenseMatrix(0, 0)) {}

  explicit DesignMatrix(SparseRowMatrix sparse) : storage_(std::move(sparse)) {
    auto& s = std::get<SparseRowMatrix>(storage_);
    s.makeCompressed();
    for (Index k = 0; k < s.nonZeros(); ++k) {
      if (!std::isfinite(s.valuePtr()[k])) throw InvalidArgument("design matrix has non-finite entries");
    }
    by_col_ = std::make_shared<const SparseColMatrix>(s);
  }

  explicit DesignMatrix(DenseMatrix dense) : storage_(std::move(dense)) {
    if (!std::get<DenseMatrix>(storage_).allFinite()) {
      throw InvalidArgument("design matrix has non-finite entries");
    }
  }

  Index rows() const {
    return std::visit([](const auto& a) { return static_cast<Index>(a.rows()); }, storage_);
  }
  Index cols() const {
    return std::visit([](const auto& a) { return static_cast<Index>(a.cols()); }, storage_);
  }

  bool is_sparse() const { return std::holds_alternative<SparseRowMatrix>(storage_); }

  const SparseRowMatrix& sparse() const { return std::get<SparseRowMatrix>(storage_); }
  const DenseMatrix& dense() const { return std::get<DenseMatrix>(storage_); }
  const SparseColMatrix& sparse_by_column() const {
    if (!by_col_) throw InvalidArgument("sparse_by_column: matrix is dense");
    return *by_col_;
  }

  /// Number of stored entries that are nonzero.
  Index nnz() const {
    if (is_sparse()) {
      const auto& s = sparse();
      return static_cast<Index>(std::count_if(s.valuePtr(), s.valuePtr() + s.nonZeros(),
                                              [](double x) { return x != 0.0; }));
    }
    return static_cast<Index>((dense().array() != 0.0).count());
  }

  double density() const {
    const double cells = static_cast<double>(rows()) * static_cast<double>(cols());
    return cells == 0.0 ? 0.0 : static_cast<double>(nnz()) / cells;
  }

  /// A w
  Vector multiply(const Vector& w) const {
    if (w.size() != cols()) throw ShapeError("multiply: vector length != cols");
    if (by_col_) {
      // w is usually sparse: touch only the columns it uses
      const Index used = (w.array() != 0.0).count();
      if (4 * used < cols()) {
        Vector out = Vector::Zero(rows());
        for (Index j = 0; j < w.size(); ++j) {
          if (w[j] == 0.0) continue;
          for (SparseColMatrix::InnerIterator it(*by_col_, j); it; ++it) out[it.row()] += it.value() * w[j];
        }
        return out;
      }
    }
    return std::visit([&](const auto& a) -> Vector { return a * w; }, storage_);
  }

  /// A^T u
  Vector multiply_transpose(const Vector& u) const {
    if (u.size() != rows()) throw ShapeError("multiply_transpose: vector length != rows");
    return std::visit([&](const auto& a) -> Vector { return a.transpose() * u; }, storage_);
  }

  /// Columns `idx` (in the given order) as a new matrix with the same layout.
  DesignMatrix select_columns(std::span<const Index> idx) const {
    check_indices(idx);
    if (!is_sparse()) {
      const auto& d = dense();
      DenseMatrix out(d.rows(), static_cast<Index>(idx.size()));
      for (std::size_t k = 0; k < idx.size(); ++k) out.col(static_cast<Index>(k)) = d.col(idx[k]);
      return DesignMatrix(std::move(out));
    }
    SparseColMatrix by_col = column_block(idx);
    SparseRowMatrix by_row(by_col);
    return DesignMatrix(std::move(by_row), std::make_shared<const SparseColMatrix>(std::move(by_col)));
  }

  /// Columns `idx` of a sparse matrix, row-major.
  SparseRowMatrix sparse_columns(std::span<const Index> idx) const { return SparseRowMatrix(column_block(idx)); }

 private:
  DesignMatrix(SparseRowMatrix by_row, std::shared_ptr<const SparseColMatrix> by_col)
      : storage_(std::move(by_row)), by_col_(std::move(by_col)) {}

  SparseColMatrix column_block(std::span<const Index> idx) const {
    check_indices(idx);
    const SparseColMatrix& c = sparse_by_column();
    Index total = 0;
    for (Index j : idx) total += c.outerIndexPtr()[j + 1] - c.outerIndexPtr()[j];
    SparseColMatrix sub(c.rows(), static_cast<Index>(idx.size()));
    sub.reserve(total);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      sub.startVec(static_cast<Index>(k));
      for (SparseColMatrix::InnerIterator it(c, idx[k]); it; ++it) sub.insertBack(it.row(), static_cast<Index>(k)) = it.value();
    }
    sub.finalize();
    return sub;
  }

 public:
  /// Columns `idx` gathered into a dense m x |idx| block.
  DenseMatrix dense_columns(std::span<const Index> idx) const {
    check_indices(idx);
    DenseMatrix out(rows(), static_cast<Index>(idx.size()));
    if (!is_sparse()) {
      const auto& d = dense();
      for (std::size_t k = 0; k < idx.size(); ++k) out.col(static_cast<Index>(k)) = d.col(idx[k]);
      return out;
    }
    out.setZero();
    const SparseColMatrix& c = sparse_by_column();
    for (std::size_t k = 0; k < idx.size(); ++k) {
      for (SparseColMatrix::InnerIterator it(c, idx[k]); it; ++it) out(it.row(), static_cast<Index>(k)) = it.value();
    }
    return out;
  }

  DenseMatrix to_dense() const {
    if (is_sparse()) return DenseMatrix(sparse());
    return dense();
  }

  /// Euclidean norm of every column.
  Vector column_norms() const {
    if (!is_sparse()) return dense().colwise().norm().transpose();
    Vector sq = Vector::Zero(cols());
    const auto& s = sparse();
    for (Index k = 0; k < s.nonZeros(); ++k) sq[s.innerIndexPtr()[k]] += s.valuePtr()[k] * s.valuePtr()[k];
    return sq.cwiseSqrt();
  }

  double frobenius_norm_squared() const {
    return std::visit([](const auto& a) { return a.squaredNorm(); }, storage_);
  }

  friend bool operator==(const DesignMatrix& a, const DesignMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    return (a.to_dense().array() == b.to_dense().array()).all();
  }

 private:
  void check_indices(std::span<const Index> idx) const {
    for (Index j : idx) {
      if (j < 0 || j >= cols()) throw InvalidArgument("column index out of range");
    }
  }

  std::variant<SparseRowMatrix, DenseMatrix> storage_;
  std::shared_ptr<const SparseColMatrix> by_col_;  // sparse only; immutable, so copies share it
};

}  // namespace slr
