#pragma once

#include <vector>

#include <Eigen/Core>

namespace loris {

/// Entry (row, col) of an n x p matrix.
struct Cell {
  int i = 0;
  int j = 0;

  auto operator<=>(const Cell&) const = default;
};

/// Coordinate-format sparse matrix. Entries are kept in insertion order and
/// every product accumulates in that order, so results are reproducible.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  SparseMatrix(int rows, int cols) : rows_(rows), cols_(cols) {}
  SparseMatrix(int rows, int cols, std::vector<Cell> cells, std::vector<double> values);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t nonzeros() const { return values_.size(); }

  void push_back(int i, int j, double value);

  const std::vector<Cell>& cells() const { return cells_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& mutable_values() { return values_; }

  /// y = A x, x of length cols().
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  /// y = A^T x, x of length rows().
  Eigen::VectorXd apply_transpose(const Eigen::VectorXd& x) const;

  double frobenius_norm() const;
  bool all_zero() const;
  Eigen::MatrixXd to_dense() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<Cell> cells_;
  std::vector<double> values_;
};

}  // namespace loris
