#include "loris/sparse.hpp"

#include "loris/accum.hpp"

#include <cmath>

#include "loris/error.hpp"

namespace loris {

SparseMatrix::SparseMatrix(int rows, int cols, std::vector<Cell> cells, std::vector<double> values)
    : rows_(rows), cols_(cols), cells_(std::move(cells)), values_(std::move(values)) {
  if (cells_.size() != values_.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "sparse matrix: cells/values length differ");
  }
  for (const Cell& c : cells_) {
    if (c.i < 0 || c.i >= rows_ || c.j < 0 || c.j >= cols_) {
      throw Error(ErrorKind::kDimensionMismatch, "sparse matrix: entry out of range");
    }
  }
}

void SparseMatrix::push_back(int i, int j, double value) {
  if (i < 0 || i >= rows_ || j < 0 || j >= cols_) {
    throw Error(ErrorKind::kDimensionMismatch, "sparse matrix: entry out of range");
  }
  cells_.push_back({i, j});
  values_.push_back(value);
}

Eigen::VectorXd SparseMatrix::apply(const Eigen::VectorXd& x) const {
  if (x.size() != cols_) throw Error(ErrorKind::kDimensionMismatch, "apply: length mismatch");
  AccumVec y(rows_);
  for (std::size_t e = 0; e < values_.size(); ++e) y.add(cells_[e].i, values_[e] * x[cells_[e].j]);
  return y.value();
}

Eigen::VectorXd SparseMatrix::apply_transpose(const Eigen::VectorXd& x) const {
  if (x.size() != rows_) throw Error(ErrorKind::kDimensionMismatch, "apply_transpose: length mismatch");
  AccumVec y(cols_);
  for (std::size_t e = 0; e < values_.size(); ++e) y.add(cells_[e].j, values_[e] * x[cells_[e].i]);
  return y.value();
}

double SparseMatrix::frobenius_norm() const {
  double s = 0.0;
  for (double v : values_) s += v * v;
  return std::sqrt(s);
}

bool SparseMatrix::all_zero() const {
  for (double v : values_) {
    if (v != 0.0) return false;
  }
  return true;
}

Eigen::MatrixXd SparseMatrix::to_dense() const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows_, cols_);
  for (std::size_t e = 0; e < values_.size(); ++e) out(cells_[e].i, cells_[e].j) += values_[e];
  return out;
}

}  // namespace loris
