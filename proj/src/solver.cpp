#include "loris/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "loris/error.hpp"

namespace loris {

const char* alpha_update_name(AlphaUpdate mode) {
  switch (mode) {
    case AlphaUpdate::kAuto: return "auto";
    case AlphaUpdate::kProximal: return "proximal";
    case AlphaUpdate::kExact: return "exact";
  }
  return "auto";
}

AlphaUpdate parse_alpha_update(const std::string& text) {
  if (text == "auto") return AlphaUpdate::kAuto;
  if (text == "proximal" || text == "prox") return AlphaUpdate::kProximal;
  if (text == "exact") return AlphaUpdate::kExact;
  throw Error(ErrorKind::kParse, "alpha_update must be auto, proximal or exact (got '" + text + "')");
}

void SolverConfig::validate() const {
  pen.validate();
  auto nonneg = [](double x) { return x >= 0.0 && std::isfinite(x); };
  if (!nonneg(gamma_step) || !nonneg(sigma_alpha) || !nonneg(sigma_theta) || !nonneg(sigma_hat_theta)) {
    throw Error(ErrorKind::kInvalidArgument, "step and smoothness constants must be finite and >= 0");
  }
  if (gamma_step > 0.0 && sigma_alpha > 0.0 && gamma_step > 1.0 / sigma_alpha) {
    throw Error(ErrorKind::kInvalidArgument, "gamma_step must not exceed 1 / sigma_alpha");
  }
  if (max_iters < 1) throw Error(ErrorKind::kInvalidArgument, "max_iters must be >= 1");
  if (!(tol_rel_obj >= 0.0)) throw Error(ErrorKind::kInvalidArgument, "tol_rel_obj must be >= 0");
  if (patience < 1) throw Error(ErrorKind::kInvalidArgument, "patience must be >= 1");
  if (!(svd_delta > 0.0 && svd_delta < 1.0)) throw Error(ErrorKind::kInvalidArgument, "svd_delta must be in (0,1)");
  if (svd_max_iters < 1) throw Error(ErrorKind::kInvalidArgument, "svd_max_iters must be >= 1");
}

// ---------------------------------------------------------------------------
// Alpha block

Eigen::VectorXd soft_threshold(const Eigen::VectorXd& x, double lam) {
  if (lam < 0.0) throw Error(ErrorKind::kInvalidArgument, "soft_threshold needs lam >= 0");
  Eigen::VectorXd out(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double mag = std::abs(x[k]) - lam;
    out[k] = mag > 0.0 ? std::copysign(mag, x[k]) : 0.0;
  }
  return out;
}

Eigen::VectorXd prox_alpha_step(const Eigen::VectorXd& alpha, const Eigen::VectorXd& grad, double gamma,
                                double lambda_S) {
  if (alpha.size() != grad.size()) throw Error(ErrorKind::kDimensionMismatch, "alpha/grad length differ");
  Eigen::VectorXd next = soft_threshold(alpha - gamma * grad, gamma * lambda_S);
  for (Eigen::Index k = 0; k < next.size(); ++k) {
    if (!std::isfinite(next[k])) throw Error(ErrorKind::kNonFinite, "proximal alpha step");
  }
  return next;
}

Eigen::VectorXd prox_alpha_step(const Problem& problem, const ModelParams& params, double gamma, double lambda_S) {
  return prox_alpha_step(params.alpha, grad_alpha(problem, params), gamma, lambda_S);
}

std::optional<ExactAlphaPlan> plan_exact_alpha(const Problem& problem, std::string* why) {
  auto reject = [&](const std::string& reason) -> std::optional<ExactAlphaPlan> {
    if (why != nullptr) *why = reason;
    return std::nullopt;
  };
  const Dictionary& dict = problem.dictionary();
  const int q = dict.size();
  ExactAlphaPlan plan;
  plan.family.assign(static_cast<std::size_t>(q), ExactAlphaPlan::Family::kQuadratic);
  plan.value = Eigen::VectorXd::Zero(q);
  plan.rate = Eigen::VectorXd::Zero(q);
  for (int k = 0; k < q; ++k) {
    const auto& atom = dict.atom(k);
    if (atom.empty()) continue;
    const double c = atom.front().value;
    if (c == 0.0) return reject("atom " + std::to_string(k) + " has a zero entry");
    const LinkKind& first_link = problem.data().link(atom.front().cell.j);
    for (const DictEntry& d : atom) {
      if (d.value != c) return reject("atom " + std::to_string(k) + " is not constant on its support");
      if (dict.at(d.cell).size() != 1) return reject("atom supports overlap");
      const LinkKind& link = problem.data().link(d.cell.j);
      if (link.family() == LinkFamily::kBernoulli) {
        return reject("atom " + std::to_string(k) + " covers a bernoulli column");
      }
      if (link.family() != first_link.family()) {
        return reject("atom " + std::to_string(k) + " mixes quadratic and exponential links");
      }
      if (link.family() == LinkFamily::kPoisson && link.param() != first_link.param()) {
        return reject("atom " + std::to_string(k) + " mixes poisson rate-scales");
      }
    }
    plan.value[k] = c;
    if (first_link.family() == LinkFamily::kPoisson) {
      plan.family[static_cast<std::size_t>(k)] = ExactAlphaPlan::Family::kExponential;
      plan.rate[k] = first_link.param();
    }
  }
  return plan;
}

AtomStats accumulate_atom_stats(const EntryBlock& block, const ExactAlphaPlan& plan,
                                const Eigen::VectorXd& theta_local) {
  const Problem& problem = block.problem();
  AtomStats stats{AccumVec(problem.q()), AccumVec(problem.q())};
  for (std::size_t t = 0; t < block.size(); ++t) {
    const std::size_t e = block.entries()[t];
    const auto design = problem.design(e);
    if (design.empty()) continue;
    const int k = design.front().k;
    const double theta = theta_local[static_cast<Eigen::Index>(t)];
    const double y = problem.obs(e).y;
    if (plan.family[static_cast<std::size_t>(k)] == ExactAlphaPlan::Family::kQuadratic) {
      const double s2 = problem.link_of(e).param();
      stats.first.add(k, y - s2 * theta);
      stats.second.add(k, s2);
    } else {
      stats.first.add(k, y);
      stats.second.add(k, std::exp(plan.rate[k] * theta));
    }
  }
  return stats;
}

Eigen::VectorXd solve_exact_alpha(const ExactAlphaPlan& plan, const AtomStats& stats, double lambda_S) {
  const Eigen::Index q = plan.value.size();
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(q);
  const Eigen::VectorXd first = stats.first.value();
  const Eigen::VectorXd second = stats.second.value();
  for (Eigen::Index k = 0; k < q; ++k) {
    const double c = plan.value[k];
    const double s1 = first[k];
    const double s2 = second[k];
    if (c == 0.0 || s2 == 0.0) continue;
    if (plan.family[static_cast<std::size_t>(k)] == ExactAlphaPlan::Family::kQuadratic) {
      // min (c^2 s2 / 2) a^2 - c s1 a + lambda |a|
      const double b = c * s1;
      const double mag = std::abs(b) - lambda_S;
      alpha[k] = mag > 0.0 ? std::copysign(mag, b) / (c * c * s2) : 0.0;
    } else {
      // min -c s1 a + s2 exp(r c a) + lambda |a|; the smooth derivative
      // h(a) = r c s2 exp(r c a) - c s1 is increasing.
      const double r = plan.rate[k];
      const double h0 = r * c * s2 - c * s1;
      double target = 0.0;
      if (h0 < -lambda_S) {
        target = (c * s1 - lambda_S) / (r * c * s2);
      } else if (h0 > lambda_S) {
        target = (c * s1 + lambda_S) / (r * c * s2);
      } else {
        continue;
      }
      if (!(target > 0.0)) throw Error(ErrorKind::kNonFinite, "exact alpha update has no finite minimizer");
      alpha[k] = std::log(target) / (r * c);
    }
    if (!std::isfinite(alpha[k])) throw Error(ErrorKind::kNonFinite, "exact alpha update");
  }
  return alpha;
}

Eigen::VectorXd exact_alpha_update(const Problem& problem, const ModelParams& params, double lambda_S) {
  std::string why;
  const auto plan = plan_exact_alpha(problem, &why);
  if (!plan) throw Error(ErrorKind::kUnsupportedDictionary, why);
  const EntryBlock block = EntryBlock::all(problem);
  return solve_exact_alpha(*plan, accumulate_atom_stats(block, *plan, problem.omega_theta(params)), lambda_S);
}

// ---------------------------------------------------------------------------
// (Theta, R) block

Direction cg_direction(const TopSvd& svd, double lambda_L, double R_ub) {
  Direction dir;
  if (lambda_L >= svd.sigma1) return dir;
  dir.active = true;
  dir.scale = R_ub;
  dir.R_hat = R_ub;
  dir.u = svd.u1;
  dir.v = svd.v1;
  return dir;
}

Direction cg_direction(const Problem& problem, const ModelParams& params, double lambda_L, double R_ub,
                       const PowerOptions& opts, TopSvd* svd_out) {
  const SparseMatrix g = grad_theta(problem, params);
  try {
    const TopSvd svd = power_top_svd(g, opts);
    if (svd_out != nullptr) *svd_out = svd;
    return cg_direction(svd, lambda_L, R_ub);
  } catch (const Error& err) {
    if (err.kind() != ErrorKind::kZeroMatrix) throw;
    if (svd_out != nullptr) *svd_out = TopSvd{};
    return Direction{};
  }
}

double step_size_beta(double numerator, double denominator) {
  const double num = std::max(numerator, 0.0);
  if (denominator <= 0.0) return num > 0.0 ? 1.0 : 0.0;
  return std::min(1.0, num / denominator);
}

BetaTerms beta_terms(const Problem& problem, const ModelParams& params, const Direction& dir, double lambda_L) {
  const SparseMatrix g = grad_theta(problem, params);
  BetaTerms terms;
  Accum inner;
  Accum sq;
  for (std::size_t e = 0; e < problem.omega_size(); ++e) {
    const Observation& o = problem.obs(e);
    const double theta = params.theta[problem.omega_in_xi()[e]];
    const double diff = theta - dir.at(o.i, o.j);
    inner.add(diff * g.values()[e]);
    sq.add(diff * diff);
  }
  terms.sq_distance = sq.value();
  terms.numerator = inner.value() + lambda_L * (params.R - dir.R_hat);
  return terms;
}

double step_size_beta(const Problem& problem, const ModelParams& params, const Direction& dir, double lambda_L,
                      double sigma_theta) {
  const BetaTerms terms = beta_terms(problem, params, dir, lambda_L);
  return step_size_beta(terms.numerator, sigma_theta * terms.sq_distance);
}

double update_r_ub(const Problem& problem, const ModelParams& params, const Penalties& pen) {
  return objective_F(problem, params, pen) / pen.lambda_L;
}

double compute_Ct(const CtInputs& in) {
  const double q2 = in.Q * in.Q;
  const double first = 24.0 * q2 / in.gamma;
  const double coupling = in.sigma_theta > 0.0 ? 24.0 * in.sigma_hat_theta * in.sigma_hat_theta * q2 / in.sigma_theta
                                               : 0.0;
  const double theta_part =
      std::max(6.0 * in.R_ub * (in.lambda_L + in.M), 24.0 * in.sigma_theta * in.R_ub * in.R_ub);
  return std::max(first, coupling + theta_part);
}

Penalties theoretical_lambdas(const DataFrame& data, const Dictionary& dict, const CurvatureWindow& window,
                              double C_const, double gamma_subexp) {
  if (data.entries().empty()) throw Error(ErrorKind::kNoObservations, "theoretical_lambdas needs observations");
  if (!(C_const > 0.0) || !(gamma_subexp > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "C and gamma must be > 0");
  }
  double sigma_plus_sq = 0.0;
  for (const LinkKind& link : data.links()) {
    sigma_plus_sq = std::max(sigma_plus_sq, curvature_bounds(link, window.lo, window.hi).sigma_plus_sq);
  }
  const double n = data.rows();
  const double p = data.cols();
  const double pi_hat = static_cast<double>(data.entries().size()) / (n * p);
  const double log_np = std::log(n + p);
  Penalties pen;
  pen.lambda_L = 2.0 * C_const * std::sqrt(sigma_plus_sq) * std::sqrt(pi_hat * std::max(n, p) * log_np);
  pen.lambda_S = 24.0 * dict.d_x() * log_np / gamma_subexp;
  pen.a_box = std::max(std::abs(window.lo), std::abs(window.hi));
  return pen;
}

double alpha_subgradient_residual(const Eigen::VectorXd& alpha, const Eigen::VectorXd& grad, double lambda_S) {
  double worst = 0.0;
  for (Eigen::Index k = 0; k < alpha.size(); ++k) {
    const double r = alpha[k] != 0.0 ? std::abs(grad[k] + std::copysign(lambda_S, alpha[k]))
                                     : std::max(std::abs(grad[k]) - lambda_S, 0.0);
    worst = std::max(worst, r);
  }
  return worst;
}

std::string OptimalityReport::to_string() const {
  std::ostringstream os;
  os.precision(12);
  os << "sigma1_grad_theta = " << sigma1_grad << "\n"
     << "two_lambda_L = " << 2.0 * lambda_L << "\n"
     << "theta_condition = " << (theta_ok ? "satisfied" : "violated") << "\n"
     << "alpha_subgradient_residual = " << alpha_residual << "\n"
     << "lambda_S = " << lambda_S << "\n"
     << "svd_converged = " << (svd_converged ? "true" : "false") << "\n";
  return os.str();
}

OptimalityReport optimality_report(const Problem& problem, const ModelParams& params, const Penalties& pen,
                                   const PowerOptions& opts, double rel_tol) {
  OptimalityReport rep;
  rep.lambda_L = pen.lambda_L;
  rep.lambda_S = pen.lambda_S;
  const SparseMatrix g = grad_theta(problem, params);
  if (!g.all_zero()) {
    const TopSvd svd = power_top_svd(g, opts);
    rep.sigma1_grad = svd.sigma1;
    rep.svd_converged = svd.converged;
  }
  rep.theta_ok = rep.sigma1_grad <= 2.0 * pen.lambda_L + rel_tol * pen.lambda_L;
  rep.alpha_residual = alpha_subgradient_residual(params.alpha, grad_alpha(problem, params), pen.lambda_S);
  return rep;
}

// ---------------------------------------------------------------------------
// Central backend

CentralBackend::CentralBackend(const Problem& problem)
    : block_(EntryBlock::all(problem)), theta_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(block_.size()))) {}

double CentralBackend::loss(const Eigen::VectorXd& alpha) { return block_.loss(block_.predictor(alpha, theta_)); }

Eigen::VectorXd CentralBackend::grad_alpha(const Eigen::VectorXd& alpha) {
  return block_.grad_alpha(block_.residual(block_.predictor(alpha, theta_)));
}

AtomStats CentralBackend::atom_stats(const ExactAlphaPlan& plan) {
  return accumulate_atom_stats(block_, plan, theta_);
}

std::pair<double, double> CentralBackend::predictor_range(const Eigen::VectorXd& alpha) {
  const Eigen::VectorXd m = block_.predictor(alpha, theta_);
  if (m.size() == 0) return {0.0, 0.0};
  return {m.minCoeff(), m.maxCoeff()};
}

void CentralBackend::prepare_gradient(const Eigen::VectorXd& alpha) {
  m_ = block_.predictor(alpha, theta_);
  residual_ = block_.residual(m_);
}

TopSvd CentralBackend::top_svd(const PowerOptions& opts) {
  const Problem& problem = block_.problem();
  return power_iterate(
      problem.rows(), problem.cols(), [&](const Eigen::VectorXd& v) { return block_.apply(residual_, v); },
      [&](const Eigen::VectorXd& u) { return block_.apply_transpose(residual_, u); }, opts);
}

double CentralBackend::direction_inner(const Direction& dir) {
  const Problem& problem = block_.problem();
  Accum inner;
  for (std::size_t t = 0; t < block_.size(); ++t) {
    const Observation& o = problem.obs(block_.entries()[t]);
    const auto ti = static_cast<Eigen::Index>(t);
    inner.add((theta_[ti] - dir.at(o.i, o.j)) * residual_[ti]);
  }
  return inner.value();
}

std::pair<double, double> CentralBackend::direction_range(const Direction& dir, double beta) {
  const Problem& problem = block_.problem();
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t t = 0; t < block_.size(); ++t) {
    const Observation& o = problem.obs(block_.entries()[t]);
    const auto ti = static_cast<Eigen::Index>(t);
    const double far = m_[ti] + beta * (dir.at(o.i, o.j) - theta_[ti]);
    lo = std::min({lo, m_[ti], far});
    hi = std::max({hi, m_[ti], far});
  }
  return {lo, hi};
}

void CentralBackend::apply_step(double beta, const Direction& dir) {
  const Problem& problem = block_.problem();
  for (std::size_t t = 0; t < block_.size(); ++t) {
    const Observation& o = problem.obs(block_.entries()[t]);
    const auto ti = static_cast<Eigen::Index>(t);
    theta_[ti] = convex_step(theta_[ti], dir.at(o.i, o.j), beta);
  }
}

// ---------------------------------------------------------------------------
// Driver

std::uint64_t iteration_seed(std::uint64_t seed, int t) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(t + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

struct DesignBounds {
  double col = 0.0;  // max_k sum over observed cells of |x(k)|
  double row = 0.0;  // max over observed cells of sum_k |x(k)|
};

DesignBounds observed_design_bounds(const Problem& problem) {
  DesignBounds b;
  Eigen::VectorXd col = Eigen::VectorXd::Zero(problem.q());
  for (std::size_t e = 0; e < problem.omega_size(); ++e) {
    double row = 0.0;
    for (const AtomValue& a : problem.design(e)) {
      row += std::abs(a.value);
      col[a.k] += std::abs(a.value);
    }
    b.row = std::max(b.row, row);
  }
  if (col.size() > 0) b.col = col.maxCoeff();
  return b;
}

/// Curvature bound over the links present; the window matters only for
/// Poisson links.
class Curvature {
 public:
  explicit Curvature(const Problem& problem) {
    for (const LinkKind& link : problem.data().links()) {
      if (std::find(links_.begin(), links_.end(), link) == links_.end()) links_.push_back(link);
      if (link.family() == LinkFamily::kPoisson) windowed_ = true;
    }
  }

  bool windowed() const { return windowed_; }

  double sigma_plus_sq(double lo, double hi) const {
    double s = 0.0;
    for (const LinkKind& link : links_) {
      switch (link.family()) {
        case LinkFamily::kGaussian: s = std::max(s, link.param()); break;
        case LinkFamily::kBernoulli: s = std::max(s, 0.25); break;
        case LinkFamily::kPoisson: s = std::max(s, curvature_bounds(link, lo, hi).sigma_plus_sq); break;
      }
    }
    return s;
  }

 private:
  std::vector<LinkKind> links_;
  bool windowed_ = false;
};

std::pair<double, double> merge(std::pair<double, double> a, std::pair<double, double> b) {
  return {std::min(a.first, b.first), std::max(a.second, b.second)};
}

/// Smallest curvature bound s >= lo (to a relative 1e-3) with need(s) <= s,
/// where need(s) is the curvature over the step taken with bound s. need is
/// non-increasing in s, so the feasible set is an interval [s*, inf).
template <class Need>
double self_consistent_bound(double lo, Need need) {
  double n_lo = need(lo);
  if (n_lo <= lo) return lo;
  double hi = n_lo;
  for (int guard = 0; guard < 200; ++guard) {
    const double n_hi = need(hi);
    if (n_hi <= hi) break;
    hi = std::max(n_hi, 2.0 * hi);
  }
  while (hi > lo * (1.0 + 1e-3)) {
    const double mid = std::sqrt(lo * hi);
    if (need(mid) <= mid) hi = mid;
    else lo = mid;
  }
  return hi;
}

}  // namespace

FitResult run_mcgd(const Problem& problem, const SolverConfig& cfg, Backend& backend) {
  cfg.validate();
  if (problem.omega_size() == 0) throw Error(ErrorKind::kNoObservations, "no observed entries");
  using Clock = std::chrono::steady_clock;
  const Penalties& pen = cfg.pen;
  const int q = problem.q();

  FitResult result;
  result.params = problem.zero_params();
  ModelParams& params = result.params;

  // alpha-update mode
  std::optional<ExactAlphaPlan> plan;
  if (cfg.alpha_update != AlphaUpdate::kProximal && q > 0) {
    std::string why;
    plan = plan_exact_alpha(problem, &why);
    if (!plan && cfg.alpha_update == AlphaUpdate::kExact) throw Error(ErrorKind::kUnsupportedDictionary, why);
  }
  result.alpha_update_used = plan ? AlphaUpdate::kExact : AlphaUpdate::kProximal;

  const Curvature curvature(problem);
  const DesignBounds design = observed_design_bounds(problem);
  const double design_factor = design.col * design.row;
  const double dx = problem.dictionary().d_x();

  double sigma_theta = cfg.sigma_theta;
  double sigma_alpha_curv = 0.0;  // sigma_+^2 behind the derived sigma_alpha
  auto sigma_alpha_of = [&](double curv) {
    return cfg.sigma_alpha > 0.0 ? cfg.sigma_alpha : curv * design_factor;
  };
  auto gamma_of = [&](double sigma_alpha) {
    if (cfg.gamma_step > 0.0) return cfg.gamma_step;
    return sigma_alpha > 0.0 ? 1.0 / sigma_alpha : 1.0;
  };
  double gamma = 0.0;

  auto update_alpha = [&](const Eigen::VectorXd& alpha) -> Eigen::VectorXd {
    if (q == 0) return alpha;
    if (plan) {
      gamma = gamma_of(sigma_alpha_of(std::max(sigma_alpha_curv, curvature.sigma_plus_sq(0.0, 0.0))));
      return solve_exact_alpha(*plan, backend.atom_stats(*plan), pen.lambda_S);
    }
    const Eigen::VectorXd grad = backend.grad_alpha(alpha);
    if (!curvature.windowed() || cfg.gamma_step > 0.0 || cfg.sigma_alpha > 0.0) {
      sigma_alpha_curv = std::max(sigma_alpha_curv, curvature.sigma_plus_sq(0.0, 0.0));
      gamma = gamma_of(sigma_alpha_of(sigma_alpha_curv));
      return prox_alpha_step(alpha, grad, gamma, pen.lambda_S);
    }
    // Poisson curvature grows with the predictor: the bound behind gamma must
    // cover the curvature over the whole step it produces.
    const std::pair<double, double> range = backend.predictor_range(alpha);
    sigma_alpha_curv = self_consistent_bound(curvature.sigma_plus_sq(range.first, range.second), [&](double s) {
      const Eigen::VectorXd next = prox_alpha_step(alpha, grad, gamma_of(sigma_alpha_of(s)), pen.lambda_S);
      const auto r = merge(range, backend.predictor_range(next));
      return curvature.sigma_plus_sq(r.first, r.second);
    });
    gamma = gamma_of(sigma_alpha_of(sigma_alpha_curv));
    return prox_alpha_step(alpha, grad, gamma, pen.lambda_S);
  };

  auto penalty = [&](const Eigen::VectorXd& alpha, double R) {
    return pen.lambda_S * alpha.lpNorm<1>() + pen.lambda_L * R;
  };

  const double loss0 = backend.loss(params.alpha);
  double F_prev = loss0 + penalty(params.alpha, params.R);
  {
    IterRecord rec;
    rec.t = 0;
    rec.F = F_prev;
    rec.loss = loss0;
    rec.R_ub = F_prev / pen.lambda_L;
    rec.F_mid = F_prev;
    result.trace.push_back(rec);
  }

  int streak = 0;
  for (int t = 1; t <= cfg.max_iters; ++t) {
    const auto start = Clock::now();
    backend.begin_iteration(t);
    IterRecord rec;
    rec.t = t;
    rec.R_prev = params.R;

    // alpha block
    const Eigen::VectorXd alpha_prev = params.alpha;
    params.alpha = update_alpha(params.alpha);
    rec.gamma = gamma;

    // R_UB from F(alpha^t, Theta^{t-1}, R^{t-1})
    const double loss_mid = backend.loss(params.alpha);
    rec.F_mid = loss_mid + penalty(params.alpha, params.R);
    rec.R_ub = rec.F_mid / pen.lambda_L;

    // direction
    backend.prepare_gradient(params.alpha);
    TopSvd svd;
    try {
      svd = backend.top_svd({cfg.svd_delta, cfg.svd_max_iters, iteration_seed(cfg.seed, t)});
    } catch (const Error& err) {
      if (err.kind() != ErrorKind::kZeroMatrix) throw;
      svd = TopSvd{};
    }
    rec.sigma1_grad = svd.sigma1;
    rec.power_iters = svd.iters;
    const Direction dir = cg_direction(svd, pen.lambda_L, rec.R_ub);
    rec.direction_active = dir.active;

    // step size
    const double numerator = backend.direction_inner(dir) + pen.lambda_L * (params.R - dir.R_hat);
    Accum sq_sum;
    for (std::size_t e = 0; e < problem.omega_size(); ++e) {
      const Observation& o = problem.obs(e);
      const double d = dir.at(o.i, o.j) - params.theta[problem.omega_in_xi()[e]];
      sq_sum.add(d * d);
    }
    const double sq_distance = sq_sum.value();
    if (cfg.sigma_theta > 0.0 || !curvature.windowed()) {
      sigma_theta = std::max(sigma_theta, curvature.sigma_plus_sq(0.0, 0.0));
      rec.beta = step_size_beta(numerator, sigma_theta * sq_distance);
    } else {
      // Poisson: the step must be covered by the curvature over the segment
      // it actually traverses; take the smallest bound for which it is.
      const auto range = backend.direction_range(dir, 0.0);
      sigma_theta = self_consistent_bound(curvature.sigma_plus_sq(range.first, range.second), [&](double s) {
        const double beta = step_size_beta(numerator, s * sq_distance);
        if (beta == 0.0) return 0.0;
        const auto r = backend.direction_range(dir, beta);
        return curvature.sigma_plus_sq(r.first, r.second);
      });
      rec.beta = step_size_beta(numerator, sigma_theta * sq_distance);
    }
    rec.sigma_theta = sigma_theta;

    // (Theta, R) update on the target cells
    const double beta = rec.beta;
    if (beta > 0.0) {
      for (std::size_t x = 0; x < params.xi.size(); ++x) {
        const Cell c = params.xi[x];
        const auto xi_idx = static_cast<Eigen::Index>(x);
        params.theta[xi_idx] = convex_step(params.theta[xi_idx], dir.at(c.i, c.j), beta);
      }
      params.R = convex_step(params.R, dir.R_hat, beta);
      if (cfg.log_atoms) {
        for (RankOneAtom& a : params.atoms) a.weight *= (1.0 - beta);
        std::erase_if(params.atoms, [](const RankOneAtom& a) { return a.weight == 0.0; });
        if (dir.active) params.atoms.push_back({beta * dir.scale, -dir.u, dir.v});
      }
    }
    backend.apply_step(beta, dir);

    rec.loss = backend.loss(params.alpha);
    rec.F = rec.loss + penalty(params.alpha, params.R);
    rec.R = params.R;

    const double sigma_alpha = sigma_alpha_of(std::max(sigma_alpha_curv, curvature.sigma_plus_sq(0.0, 0.0)));
    const double sigma_hat =
        cfg.sigma_hat_theta > 0.0 ? cfg.sigma_hat_theta : sigma_theta * std::sqrt(double(q)) * dx;
    rec.C_t = compute_Ct({rec.F / pen.lambda_S, gamma > 0.0 ? gamma : gamma_of(sigma_alpha), sigma_hat,
                          sigma_theta, rec.R_ub, pen.lambda_L, svd.sigma1});
    if (cfg.record_time) rec.ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    result.trace.push_back(rec);
    result.iterations = t;

    const bool fixed_point = beta == 0.0 && (alpha_prev.array() == params.alpha.array()).all();
    const double rel = (F_prev - rec.F) / std::max(std::abs(F_prev), std::numeric_limits<double>::min());
    streak = rel < cfg.tol_rel_obj ? streak + 1 : 0;
    F_prev = rec.F;
    if (fixed_point || streak >= cfg.patience) {
      result.converged = true;
      break;
    }
  }

  if (cfg.polish_alpha && q > 0) {
    if (plan) {
      params.alpha = solve_exact_alpha(*plan, backend.atom_stats(*plan), pen.lambda_S);
    } else {
      for (int it = 0; it < 5000; ++it) {
        const Eigen::VectorXd grad = backend.grad_alpha(params.alpha);
        if (alpha_subgradient_residual(params.alpha, grad, pen.lambda_S) <= 1e-9 * pen.lambda_S) break;
        const Eigen::VectorXd next = update_alpha(params.alpha);
        if ((next.array() == params.alpha.array()).all()) break;
        params.alpha = next;
      }
    }
  }
  result.final_objective = backend.loss(params.alpha) + penalty(params.alpha, params.R);
  result.sigma_theta = sigma_theta;
  result.sigma_alpha = sigma_alpha_of(std::max(sigma_alpha_curv, curvature.sigma_plus_sq(0.0, 0.0)));
  result.gamma = gamma > 0.0 ? gamma : gamma_of(result.sigma_alpha);
  result.sigma_hat_theta =
      cfg.sigma_hat_theta > 0.0 ? cfg.sigma_hat_theta : sigma_theta * std::sqrt(double(q)) * dx;
  return result;
}

FitResult mcgd_fit(const Problem& problem, const SolverConfig& cfg) {
  CentralBackend backend(problem);
  return run_mcgd(problem, cfg, backend);
}

}  // namespace loris
