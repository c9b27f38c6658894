#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "loris/accum.hpp"
#include "loris/link.hpp"
#include "loris/sparse.hpp"

namespace loris {

struct Observation {
  int i = 0;
  int j = 0;
  double y = 0.0;
};

/// Heterogeneous n x p data frame. Only observed entries (the set Omega) are
/// stored, sorted row-major.
class DataFrame {
 public:
  DataFrame() = default;
  /// Throws Error(kDimensionMismatch) on out-of-range or duplicate cells and
  /// Error(kInvalidArgument) on values outside the column family's support.
  DataFrame(int rows, int cols, std::vector<LinkKind> links, std::vector<Observation> entries,
            std::vector<std::string> labels = {});

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  const std::vector<LinkKind>& links() const { return links_; }
  const LinkKind& link(int j) const { return links_[static_cast<std::size_t>(j)]; }
  const std::vector<Observation>& entries() const { return entries_; }
  const std::vector<std::string>& labels() const { return labels_; }

  /// Pointer to the observed value, or nullptr when (i, j) is missing.
  const double* find(int i, int j) const;

  /// Cells in [rows] x [cols] that are not observed, row-major.
  std::vector<Cell> missing_cells() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<LinkKind> links_;
  std::vector<Observation> entries_;
  std::vector<std::string> labels_;
};

struct DictEntry {
  Cell cell;
  double value = 0.0;
};

struct AtomValue {
  int k = 0;
  double value = 0.0;
};

/// The q covariate matrices X(1..q), each stored as a list of nonzeros, plus
/// a per-cell index of (k, x_ij(k)).
class Dictionary {
 public:
  Dictionary() = default;
  Dictionary(int rows, int cols, std::vector<std::vector<DictEntry>> atoms);

  int size() const { return static_cast<int>(atoms_.size()); }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  const std::vector<DictEntry>& atom(int k) const { return atoms_[static_cast<std::size_t>(k)]; }

  /// max_k ||X(k)||_1 (entrywise).
  double d_x() const { return d_x_; }
  /// max_ij sum_k |X(k)_ij|.
  double nu() const { return nu_; }
  double max_abs() const { return max_abs_; }

  std::span<const AtomValue> at(Cell cell) const;

  /// <X(k), X(l)> for all k, l.
  Eigen::MatrixXd dense_gram() const;
  /// Nonzero Gram entries accumulated from the per-cell index.
  SparseMatrix sparse_gram() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<std::vector<DictEntry>> atoms_;
  std::vector<long long> cell_keys_;
  std::vector<std::size_t> cell_offsets_;
  std::vector<AtomValue> cell_atoms_;
  double d_x_ = 0.0;
  double nu_ = 0.0;
  double max_abs_ = 0.0;
};

/// Rank-one component weight * u v^T of the interaction matrix.
struct RankOneAtom {
  double weight = 0.0;
  Eigen::VectorXd u;
  Eigen::VectorXd v;
};

/// (alpha, Theta, R). Theta is stored only on the target cell set `xi`
/// (sorted row-major, containing every observed cell). `atoms` optionally
/// records Theta as a sum of rank-one terms.
struct ModelParams {
  Eigen::VectorXd alpha;
  Eigen::VectorXd theta;
  double R = 0.0;
  std::vector<Cell> xi;
  std::vector<RankOneAtom> atoms;

  /// Theta at a cell of xi, or 0 when the cell is outside xi.
  double theta_at(Cell cell) const;
};

struct Penalties {
  double lambda_S = 1.0;
  double lambda_L = 1.0;
  /// Box bound a on ||alpha||_inf and ||Theta||_inf. Recorded, never projected.
  double a_box = 0.0;

  void validate() const;
};

/// A data frame bound to a dictionary and a target cell set, with the
/// observed-entry design precomputed.
class Problem {
 public:
  Problem(DataFrame data, Dictionary dict, std::vector<Cell> extra_cells = {});

  const DataFrame& data() const { return data_; }
  const Dictionary& dictionary() const { return dict_; }
  int rows() const { return data_.rows(); }
  int cols() const { return data_.cols(); }
  int q() const { return dict_.size(); }

  std::size_t omega_size() const { return data_.entries().size(); }
  const Observation& obs(std::size_t e) const { return data_.entries()[e]; }
  const LinkKind& link_of(std::size_t e) const { return data_.link(obs(e).j); }
  double offset(std::size_t e) const { return offsets_[e]; }
  std::span<const AtomValue> design(std::size_t e) const {
    return {design_.data() + design_offsets_[e], design_offsets_[e + 1] - design_offsets_[e]};
  }

  const std::vector<Cell>& xi() const { return xi_; }
  /// Position in xi of each observed entry.
  const std::vector<std::size_t>& omega_in_xi() const { return omega_in_xi_; }

  ModelParams zero_params() const;
  /// Theta restricted to the observed entries, in Omega order.
  Eigen::VectorXd omega_theta(const ModelParams& params) const;
  void check_params(const ModelParams& params) const;

 private:
  DataFrame data_;
  Dictionary dict_;
  std::vector<Cell> xi_;
  std::vector<std::size_t> omega_in_xi_;
  std::vector<double> offsets_;
  std::vector<std::size_t> design_offsets_;
  std::vector<AtomValue> design_;
};

/// A subset of the observed entries (all of them, or one worker's share).
/// Every reduction runs sequentially over `entries()` in order with
/// compensated accumulation; the *_partial forms return the unrounded sums
/// for merging across blocks.
class EntryBlock {
 public:
  EntryBlock(const Problem& problem, std::vector<std::size_t> entries);
  static EntryBlock all(const Problem& problem);

  const Problem& problem() const { return *problem_; }
  const std::vector<std::size_t>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  /// m_e = sum_k alpha_k x_e(k) + theta_e; `theta_local` is aligned with entries().
  Eigen::VectorXd predictor(const Eigen::VectorXd& alpha, const Eigen::VectorXd& theta_local) const;
  /// sum_e (-y_e m_e + g(m_e) + c_e).
  double loss(const Eigen::VectorXd& m) const;
  Accum loss_partial(const Eigen::VectorXd& m) const;
  /// -y_e + g'(m_e).
  Eigen::VectorXd residual(const Eigen::VectorXd& m) const;
  /// sum_e r_e x_e(k).
  Eigen::VectorXd grad_alpha(const Eigen::VectorXd& residual) const;
  AccumVec grad_alpha_partial(const Eigen::VectorXd& residual) const;
  /// Gradient w.r.t. Theta as an n x p matrix supported on the block.
  SparseMatrix gradient_matrix(const Eigen::VectorXd& residual) const;
  /// (G x) and (G^T x) for the gradient G = gradient_matrix(residual).
  Eigen::VectorXd apply(const Eigen::VectorXd& residual, const Eigen::VectorXd& x) const;
  Eigen::VectorXd apply_transpose(const Eigen::VectorXd& residual, const Eigen::VectorXd& x) const;
  AccumVec apply_partial(const Eigen::VectorXd& residual, const Eigen::VectorXd& x) const;
  AccumVec apply_transpose_partial(const Eigen::VectorXd& residual, const Eigen::VectorXd& x) const;

 private:
  const Problem* problem_;
  std::vector<std::size_t> entries_;
};

double loss(const Problem& problem, const ModelParams& params);
double objective_F(const Problem& problem, const ModelParams& params, const Penalties& pen);
SparseMatrix grad_theta(const Problem& problem, const ModelParams& params);
Eigen::VectorXd grad_alpha(const Problem& problem, const ModelParams& params);

/// sum_k alpha_k X(k)_ij + Theta_ij (Theta taken as 0 outside xi).
double linear_predictor(const Dictionary& dict, const ModelParams& params, Cell cell);
/// Theta as a dense rows x cols matrix, zero outside xi.
Eigen::MatrixXd dense_theta(const ModelParams& params, int rows, int cols);
/// Every cell of a rows x cols matrix, row-major.
std::vector<Cell> all_cells(int rows, int cols);

/// Smallest eigenvalue of the dictionary Gram matrix.
double gram_kappa(const Dictionary& dict);

enum class CheckStatus { kPass, kWarn, kFail };

struct AssumptionCheck {
  std::string name;
  CheckStatus status = CheckStatus::kPass;
  std::string detail;
};

struct AssumptionReport {
  std::vector<AssumptionCheck> checks;
  double nu = 0.0;
  double d_x = 0.0;
  double kappa_sq = 0.0;

  bool has_failures() const;
  bool has_warnings() const;
  std::string to_string() const;
};

/// Dictionary bounds, nu, d_X and kappa^2; with ground truth, identifiability
/// (<Theta0, X(k)> = 0 for active k) and the box bound when a_box > 0.
AssumptionReport validate_assumptions(const DataFrame& data, const Dictionary& dict,
                                      const ModelParams* truth = nullptr, double a_box = 0.0);

}  // namespace loris
