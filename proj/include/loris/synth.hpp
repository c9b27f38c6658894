#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "loris/link.hpp"
#include "loris/model.hpp"

namespace loris {

struct SynthSpec {
  int n = 150;
  int p = 30;
  int group_size = 5;
  int rank_r = 4;
  double sparsity_frac = 0.10;
  double alpha_scale = 1.0;
  /// 0 scales Theta0 so that its largest entry is 1 before projection.
  double theta_scale = 0.0;
  double missing_frac = 0.0;
  /// Column links, repeated cyclically over the p columns.
  std::vector<LinkKind> links{LinkKind::gaussian()};
  std::uint64_t seed = 0;

  void validate() const;
  int q() const { return n * p / group_size; }
  LinkKind link(int j) const { return links[static_cast<std::size_t>(j) % links.size()]; }
};

/// Indicator atoms tiling the matrix column-major (linear index j n + i) in
/// runs of group_size.
Dictionary gen_dictionary(const SynthSpec& spec);

/// alpha0 with ceil(sparsity q) entries of +-alpha_scale at uniform
/// positions, and Theta0 = theta_scale U V^T (orthonormal n x r and p x r
/// factors) projected orthogonally to the active atoms. Theta0 is stored on
/// every cell; R is its nuclear norm.
ModelParams gen_truth(const SynthSpec& spec, const Dictionary& dict);

struct SynthData {
  DataFrame observed;
  /// Values drawn for the masked cells.
  std::vector<Observation> held_out;
};

/// Y_ij drawn from column j's family at M0_ij; each cell is then masked
/// independently with probability missing_frac.
SynthData gen_observations(const SynthSpec& spec, const Dictionary& dict, const ModelParams& truth);

/// Singular-value soft-thresholding of a dense matrix.
Eigen::MatrixXd svt(const Eigen::MatrixXd& z, double lambda, double* nuclear_norm = nullptr);

struct BaselineResult {
  ModelParams params;
  /// 0.5 |P_Omega(resid - Theta)|_F^2 + lambda |Theta|_* after each pass.
  std::vector<double> objective;
  int iterations = 0;
};

/// Group means for alpha, then soft-impute on the residuals until the
/// relative Frobenius change drops below tol. Requires disjoint atoms with a
/// constant value on their support.
BaselineResult two_step_baseline_detailed(const DataFrame& data, const Dictionary& dict, double lambda_L,
                                          double tol = 1e-5, int max_iters = 10000);
ModelParams two_step_baseline(const DataFrame& data, const Dictionary& dict, double lambda_L);

struct ErrorReport {
  double theta_sq_error = 0.0;  ///< |Theta0 - Theta_hat|_F^2 over all cells
  double alpha_sq_error = 0.0;  ///< |alpha0 - alpha_hat|_2^2
  double gaussian_mse = 0.0;
  double poisson_mse = 0.0;
  double bernoulli_error = 0.0;  ///< misclassification rate at 0.5
  int gaussian_count = 0;
  int poisson_count = 0;
  int bernoulli_count = 0;
};

/// Estimation errors against the truth and imputation errors on held-out
/// cells. The estimate's mean at a cell is g'(M_hat) under `mean_links`
/// (column j uses mean_links[j]); the metric per cell follows the data
/// frame's own column family.
ErrorReport error_metrics(const ModelParams& truth, const ModelParams& estimate, const Dictionary& dict,
                          const DataFrame& data, const std::vector<Observation>& held_out,
                          const std::vector<LinkKind>& mean_links);

}  // namespace loris
