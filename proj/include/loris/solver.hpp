#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "loris/model.hpp"
#include "loris/svd.hpp"

namespace loris {

enum class AlphaUpdate { kAuto, kProximal, kExact };

const char* alpha_update_name(AlphaUpdate mode);
AlphaUpdate parse_alpha_update(const std::string& text);

struct SolverConfig {
  Penalties pen;
  /// Proximal step gamma; 0 selects 1 / sigma_alpha.
  double gamma_step = 0.0;
  /// Smoothness of L in alpha; 0 derives sigma_+^2 * d_X * nu over the
  /// observed design.
  double sigma_alpha = 0.0;
  /// Per-entry smoothness of L in Theta; 0 derives sigma_+^2 from the link
  /// curvature over each iteration's traversed segment (for Poisson columns
  /// the smallest bound consistent with the step it implies).
  double sigma_theta = 0.0;
  /// Lipschitz constant of grad_alpha L in Theta, used only in C(t); 0
  /// selects sigma_+^2 * sqrt(q) * d_X.
  double sigma_hat_theta = 0.0;
  int max_iters = 5000;
  double tol_rel_obj = 1e-7;
  /// Consecutive small-decrease iterations required to stop.
  int patience = 5;
  double svd_delta = 1e-9;
  int svd_max_iters = 1000;
  AlphaUpdate alpha_update = AlphaUpdate::kAuto;
  std::uint64_t seed = 0;
  /// Keep the rank-one decomposition of Theta in the returned params.
  bool log_atoms = true;
  /// After the last iteration, minimize over alpha at fixed (Theta, R).
  bool polish_alpha = true;
  bool record_time = true;

  void validate() const;
};

struct IterRecord {
  int t = 0;
  double F = 0.0;
  double loss = 0.0;
  double beta = 0.0;
  double R_ub = 0.0;
  double R = 0.0;
  double sigma1_grad = 0.0;
  double C_t = 0.0;
  double ms = 0.0;
  // Not exported to CSV; used by diagnostics and tests.
  double F_mid = 0.0;  ///< F(alpha^t, Theta^{t-1}, R^{t-1}) = lambda_L * R_ub
  double R_prev = 0.0;
  double gamma = 0.0;
  double sigma_theta = 0.0;
  bool direction_active = false;
  int power_iters = 0;
};

using IterTrace = std::vector<IterRecord>;

struct FitResult {
  ModelParams params;
  IterTrace trace;
  bool converged = false;
  int iterations = 0;
  AlphaUpdate alpha_update_used = AlphaUpdate::kProximal;
  double final_objective = 0.0;
  double sigma_alpha = 0.0;
  double sigma_theta = 0.0;
  double sigma_hat_theta = 0.0;
  double gamma = 0.0;
};

// ---------------------------------------------------------------------------
// Building blocks

/// sign(x_i) * max(|x_i| - lam, 0).
Eigen::VectorXd soft_threshold(const Eigen::VectorXd& x, double lam);

/// T_{gamma * lambda_S}(alpha - gamma * grad).
Eigen::VectorXd prox_alpha_step(const Eigen::VectorXd& alpha, const Eigen::VectorXd& grad, double gamma,
                                double lambda_S);
/// One proximal step from `params`.
Eigen::VectorXd prox_alpha_step(const Problem& problem, const ModelParams& params, double gamma, double lambda_S);

/// Closed-form alpha minimization for dictionaries whose atoms have disjoint
/// supports and a constant value c_k, with every atom lying on Gaussian
/// cells or on Poisson cells of one rate-scale.
struct ExactAlphaPlan {
  enum class Family { kQuadratic, kExponential };
  std::vector<Family> family;
  Eigen::VectorXd value;  ///< c_k
  Eigen::VectorXd rate;   ///< Poisson rate-scale of atom k (exponential atoms)
};

/// The plan, or the reason the dictionary does not qualify.
std::optional<ExactAlphaPlan> plan_exact_alpha(const Problem& problem, std::string* why = nullptr);

/// Per-atom sufficient statistics over a block of observed entries:
/// quadratic atoms sum (y - sigma^2 theta) and sigma^2, exponential atoms sum
/// y and exp(a theta).
struct AtomStats {
  AccumVec first;
  AccumVec second;

  void merge(const AtomStats& other) {
    first.merge(other.first);
    second.merge(other.second);
  }
};

AtomStats accumulate_atom_stats(const EntryBlock& block, const ExactAlphaPlan& plan,
                                const Eigen::VectorXd& theta_local);
Eigen::VectorXd solve_exact_alpha(const ExactAlphaPlan& plan, const AtomStats& stats, double lambda_S);

/// argmin_alpha F(alpha, Theta, R). Throws Error(kUnsupportedDictionary) when
/// plan_exact_alpha rejects the problem.
Eigen::VectorXd exact_alpha_update(const Problem& problem, const ModelParams& params, double lambda_S);

/// Conditional-gradient direction (Theta_hat, R_hat) with
/// Theta_hat = -scale * u v^T when active, (0, 0) otherwise.
struct Direction {
  bool active = false;
  double scale = 0.0;
  double R_hat = 0.0;
  Eigen::VectorXd u;
  Eigen::VectorXd v;

  double at(int i, int j) const { return active ? -scale * u[i] * v[j] : 0.0; }
};

Direction cg_direction(const TopSvd& svd, double lambda_L, double R_ub);
/// Direction from the gradient at `params`; a zero gradient yields (0, 0).
Direction cg_direction(const Problem& problem, const ModelParams& params, double lambda_L, double R_ub,
                       const PowerOptions& opts, TopSvd* svd_out = nullptr);

/// min{1, (numerator)_+ / denominator}; denominator 0 gives 1 when the
/// numerator is positive, else 0.
double step_size_beta(double numerator, double denominator);

struct BetaTerms {
  double numerator = 0.0;    ///< <Theta - Theta_hat, grad> + lambda_L (R - R_hat)
  double sq_distance = 0.0;  ///< ||P_Omega(Theta_hat - Theta)||_F^2
};

BetaTerms beta_terms(const Problem& problem, const ModelParams& params, const Direction& dir, double lambda_L);
double step_size_beta(const Problem& problem, const ModelParams& params, const Direction& dir, double lambda_L,
                      double sigma_theta);

/// lambda_L^{-1} F(params).
double update_r_ub(const Problem& problem, const ModelParams& params, const Penalties& pen);

struct CtInputs {
  double Q = 0.0;  ///< lambda_S^{-1} F(alpha^t, Theta^t, R^t)
  double gamma = 1.0;
  double sigma_hat_theta = 0.0;
  double sigma_theta = 1.0;
  double R_ub = 0.0;
  double lambda_L = 1.0;
  double M = 0.0;  ///< spectral norm of grad_Theta L(alpha^t, Theta^{t-1})
};

/// max{24 Q^2/gamma, 24 sigma_hat^2 Q^2/sigma_theta
///     + max{6 R_ub (lambda_L + M), 24 sigma_theta R_ub^2}}.
double compute_Ct(const CtInputs& in);

struct CurvatureWindow {
  double lo = -1.0;
  double hi = 1.0;
};

/// lambda_L = 2 C sigma_+ sqrt(pi_hat max(n,p) log(n+p)),
/// lambda_S = 24 d_X log(n+p) / gamma, with pi_hat = |Omega| / (n p) and
/// sigma_+^2 the largest link curvature over the window.
Penalties theoretical_lambdas(const DataFrame& data, const Dictionary& dict, const CurvatureWindow& window,
                              double C_const = 1.0, double gamma_subexp = 1.0);

struct OptimalityReport {
  double sigma1_grad = 0.0;
  double lambda_L = 0.0;
  bool theta_ok = false;
  double alpha_residual = 0.0;  ///< max_k dist(0, grad_k + lambda_S d|alpha_k|)
  double lambda_S = 0.0;
  bool svd_converged = true;

  std::string to_string() const;
};

OptimalityReport optimality_report(const Problem& problem, const ModelParams& params, const Penalties& pen,
                                   const PowerOptions& opts = {}, double rel_tol = 1e-3);

/// max_k dist(0, g_k + lambda_S d|alpha_k|).
double alpha_subgradient_residual(const Eigen::VectorXd& alpha, const Eigen::VectorXd& grad, double lambda_S);

// ---------------------------------------------------------------------------
// Driver

/// Evaluation backend for the driver. The backend keeps its own copy of
/// Theta on the observed entries, changed only through apply_step.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual double loss(const Eigen::VectorXd& alpha) = 0;
  virtual Eigen::VectorXd grad_alpha(const Eigen::VectorXd& alpha) = 0;
  virtual AtomStats atom_stats(const ExactAlphaPlan& plan) = 0;
  /// min/max of the linear predictor over the observed entries.
  virtual std::pair<double, double> predictor_range(const Eigen::VectorXd& alpha) = 0;
  /// Fix the gradient grad_Theta L(alpha, Theta) used by the next calls.
  virtual void prepare_gradient(const Eigen::VectorXd& alpha) = 0;
  virtual TopSvd top_svd(const PowerOptions& opts) = 0;
  /// <P_Omega(Theta - Theta_hat), grad> for the prepared gradient.
  virtual double direction_inner(const Direction& dir) = 0;
  /// min/max of the predictor over the traversed segment, m and
  /// m + beta (theta_hat - theta), for the prepared alpha.
  virtual std::pair<double, double> direction_range(const Direction& dir, double beta) = 0;
  virtual void apply_step(double beta, const Direction& dir) = 0;
  /// Called once per iteration before any other call.
  virtual void begin_iteration(int t) { (void)t; }
};

/// Single-process backend over all observed entries.
class CentralBackend final : public Backend {
 public:
  explicit CentralBackend(const Problem& problem);

  double loss(const Eigen::VectorXd& alpha) override;
  Eigen::VectorXd grad_alpha(const Eigen::VectorXd& alpha) override;
  AtomStats atom_stats(const ExactAlphaPlan& plan) override;
  std::pair<double, double> predictor_range(const Eigen::VectorXd& alpha) override;
  void prepare_gradient(const Eigen::VectorXd& alpha) override;
  TopSvd top_svd(const PowerOptions& opts) override;
  double direction_inner(const Direction& dir) override;
  std::pair<double, double> direction_range(const Direction& dir, double beta) override;
  void apply_step(double beta, const Direction& dir) override;

 private:
  EntryBlock block_;
  Eigen::VectorXd theta_;
  Eigen::VectorXd m_;
  Eigen::VectorXd residual_;
};

/// Seed of the power-iteration start vector at iteration t.
std::uint64_t iteration_seed(std::uint64_t seed, int t);

/// theta + beta (target - theta); the single update formula shared by every
/// holder of Theta.
inline double convex_step(double theta, double target, double beta) { return theta + beta * (target - theta); }

FitResult run_mcgd(const Problem& problem, const SolverConfig& cfg, Backend& backend);

/// Mixed coordinate gradient descent: alpha by proximal (or exact) steps,
/// (Theta, R) by conditional-gradient steps with an on-the-fly R_UB.
FitResult mcgd_fit(const Problem& problem, const SolverConfig& cfg);

}  // namespace loris
