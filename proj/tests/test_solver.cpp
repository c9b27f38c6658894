#include <cmath>
#include <functional>
#include <random>

#include <Eigen/SVD>
#include <doctest.h>

#include "helpers.hpp"
#include "loris/error.hpp"
#include "loris/solver.hpp"
#include "loris/synth.hpp"

using namespace loris;

namespace {

double golden_min(const std::function<double(double)>& f, double lo, double hi, double tol = 1e-11) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

/// Disjoint constant-valued atoms over the cells of an n x p frame, in runs
/// of `len` along the columns, with values c_k drawn from {+-0.5, +-1}.
Dictionary constant_runs(int n, int p, int len, std::mt19937_64& rng) {
  const double values[] = {1.0, -1.0, 0.5, -0.5};
  std::vector<std::vector<DictEntry>> atoms;
  for (int start = 0; start < n * p; start += len) {
    const double c = values[rng() % 4];
    std::vector<DictEntry> atom;
    for (int t = start; t < std::min(start + len, n * p); ++t) atom.push_back({{t % n, t / n}, c});
    atoms.push_back(atom);
  }
  return Dictionary(n, p, atoms);
}

DataFrame gaussian_frame(const Eigen::MatrixXd& y, double sigma_sq = 1.0) {
  std::vector<Observation> obs;
  for (int i = 0; i < y.rows(); ++i)
    for (int j = 0; j < y.cols(); ++j) obs.push_back({i, j, y(i, j)});
  return DataFrame(static_cast<int>(y.rows()), static_cast<int>(y.cols()),
                   std::vector<LinkKind>(static_cast<std::size_t>(y.cols()), LinkKind::gaussian(sigma_sq)), obs);
}

}  // namespace

TEST_CASE("soft thresholding") {
  Eigen::VectorXd x(3);
  x << 3.0, -0.5, 1.0;
  Eigen::VectorXd want(3);
  want << 2.0, 0.0, 0.0;
  CHECK(soft_threshold(x, 1.0) == want);
  CHECK(soft_threshold(x, 0.0) == x);
  Eigen::VectorXd y(1);
  y << -4.0;
  CHECK(soft_threshold(y, 1.5)[0] == doctest::Approx(-2.5));
  CHECK_THROWS_AS(soft_threshold(x, -1.0), Error);
}

TEST_CASE("proximal alpha step") {
  Eigen::VectorXd a(1), g(1);
  a << 0.1;
  g << 0.0;
  CHECK(prox_alpha_step(a, g, 1.0, 0.2)[0] == 0.0);
  CHECK(prox_alpha_step(a, g, 1.0, 0.0)[0] == 0.1);

  // one-column lasso: the step equals the scalar prox formula
  const Eigen::MatrixXd y = (Eigen::MatrixXd(4, 1) << 1.0, 2.0, -0.5, 0.3).finished();
  const Dictionary dict(4, 1, {{{{0, 0}, 1.0}, {{1, 0}, 1.0}}, {{{2, 0}, -1.0}, {{3, 0}, 0.5}}});
  const Problem pb(gaussian_frame(y), dict);
  ModelParams params = pb.zero_params();
  params.alpha << 0.2, -0.1;
  const double gamma = 0.3, lam = 0.4;
  const Eigen::VectorXd got = prox_alpha_step(pb, params, gamma, lam);
  for (int k = 0; k < 2; ++k) {
    double grad = 0.0;
    for (const DictEntry& e : dict.atom(k)) {
      double m = 0.0;
      for (int l = 0; l < 2; ++l)
        for (const DictEntry& f : dict.atom(l))
          if (f.cell == e.cell) m += params.alpha[l] * f.value;
      grad += (m - y(e.cell.i, 0)) * e.value;
    }
    const double z = params.alpha[k] - gamma * grad;
    const double want = z > gamma * lam ? z - gamma * lam : (z < -gamma * lam ? z + gamma * lam : 0.0);
    CHECK(got[k] == doctest::Approx(want).epsilon(1e-14));
  }
}

TEST_CASE("exact alpha: group mean and full shrinkage") {
  const Eigen::MatrixXd y = Eigen::MatrixXd::Ones(2, 2);
  std::vector<DictEntry> atom{{{0, 0}, 1.0}, {{0, 1}, 1.0}, {{1, 0}, 1.0}, {{1, 1}, 1.0}};
  const Problem pb(gaussian_frame(y), Dictionary(2, 2, {atom}));
  CHECK(exact_alpha_update(pb, pb.zero_params(), 0.0)[0] == doctest::Approx(1.0));
  CHECK(exact_alpha_update(pb, pb.zero_params(), 4.0)[0] == 0.0);
  CHECK(exact_alpha_update(pb, pb.zero_params(), 2.0)[0] == doctest::Approx(0.5));
}

TEST_CASE("exact alpha matches a scalar golden-section search") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> z;
  for (int rep = 0; rep < 4; ++rep) {
    const bool poisson = rep % 2 == 1;
    const int n = 6, p = 4;
    const Dictionary dict = constant_runs(n, p, 3, rng);
    std::vector<Observation> obs;
    std::bernoulli_distribution keep(0.8);
    const LinkKind link = poisson ? LinkKind::poisson(0.7) : LinkKind::gaussian(1.5);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < p; ++j)
        if (keep(rng)) obs.push_back({i, j, poisson ? double(rng() % 5) : z(rng)});
    const Problem pb(DataFrame(n, p, std::vector<LinkKind>(p, link), obs), dict);
    ModelParams params = testing::random_params(pb, 0.3, 100 + rep);
    const double lam = 0.8;
    const Eigen::VectorXd exact = exact_alpha_update(pb, params, lam);
    for (int k = 0; k < pb.q(); ++k) {
      auto f = [&](double a) {
        ModelParams trial = params;
        trial.alpha[k] = a;
        return loss(pb, trial) + lam * std::abs(a);
      };
      // golden section on values only resolves the argmin to ~sqrt(eps)
      const double oracle = golden_min(f, -8.0, 8.0);
      CHECK(std::abs(exact[k] - oracle) <= 1e-6);
      CHECK(f(exact[k]) <= f(oracle) + 1e-13 * std::abs(f(oracle)));
    }
    // and the result is a zero of the subgradient residual
    ModelParams at = params;
    at.alpha = exact;
    CHECK(alpha_subgradient_residual(at.alpha, grad_alpha(pb, at), lam) <= 1e-8);
  }
}

TEST_CASE("exact alpha preconditions") {
  std::mt19937_64 rng(3);
  const auto inst = testing::random_instance(4, 4, 3, {LinkKind::gaussian()}, 0.0, 5);
  std::string why;
  CHECK_FALSE(plan_exact_alpha(Problem(inst.data, inst.dict), &why));
  CHECK_FALSE(why.empty());
  CHECK_THROWS_AS(exact_alpha_update(Problem(inst.data, inst.dict), Problem(inst.data, inst.dict).zero_params(), 1.0),
                  Error);

  const Dictionary runs = constant_runs(4, 2, 2, rng);
  const DataFrame bern(4, 2, {LinkKind::bernoulli(), LinkKind::bernoulli()}, {{0, 0, 1.0}});
  CHECK_FALSE(plan_exact_alpha(Problem(bern, runs)));
  const DataFrame gauss(4, 2, {LinkKind::gaussian(), LinkKind::gaussian(2.0)}, {{0, 0, 1.0}});
  CHECK(plan_exact_alpha(Problem(gauss, runs)));
  // a run spanning a Gaussian and a Poisson column mixes families
  const Dictionary spanning(4, 2, {{{{3, 0}, 1.0}, {{0, 1}, 1.0}}});
  const DataFrame mixed(4, 2, {LinkKind::gaussian(), LinkKind::poisson()}, {{0, 0, 1.0}});
  CHECK_FALSE(plan_exact_alpha(Problem(mixed, spanning)));
}

TEST_CASE("direction: inactive below lambda_L, top triple otherwise") {
  TopSvd small;
  small.sigma1 = 0.5;
  small.u1 = Eigen::VectorXd::Unit(2, 0);
  small.v1 = Eigen::VectorXd::Unit(2, 0);
  const Direction none = cg_direction(small, 1.0, 2.0);
  CHECK_FALSE(none.active);
  CHECK(none.R_hat == 0.0);
  CHECK(none.at(0, 0) == 0.0);

  // gradient diag(3, 0): Gaussian 2x2, theta = 0, y = -diag(3, 0)
  const Eigen::MatrixXd y = (Eigen::MatrixXd(2, 2) << -3.0, 0.0, 0.0, 0.0).finished();
  const Problem pb(gaussian_frame(y), Dictionary(2, 2, {}));
  TopSvd svd;
  const Direction d = cg_direction(pb, pb.zero_params(), 1.0, 2.0, {1e-12, 1000, 1}, &svd);
  CHECK(svd.sigma1 == doctest::Approx(3.0));
  REQUIRE(d.active);
  CHECK(d.R_hat == 2.0);
  CHECK(d.at(0, 0) == doctest::Approx(-2.0));
  CHECK(std::abs(d.at(1, 1)) <= 1e-9);
  CHECK(std::abs(d.at(0, 1)) <= 1e-9);
}

TEST_CASE("direction solves the linear subproblem (brute force over rank-one extreme points)") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z;
  // unit vectors of R^3 on a latitude/longitude grid
  std::vector<Eigen::Vector3d> sphere;
  const int N = 48;
  for (int a = 0; a <= N; ++a)
    for (int b = 0; b < 2 * N; ++b) {
      const double th = M_PI * a / N, ph = M_PI * b / N;
      sphere.emplace_back(std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th));
    }
  for (int rep = 0; rep < 3; ++rep) {
    Eigen::MatrixXd y(3, 3);
    for (auto& v : y.reshaped()) v = z(rng);
    const Problem pb(gaussian_frame(y), Dictionary(3, 3, {}));
    const ModelParams params = pb.zero_params();
    const Eigen::MatrixXd grad = grad_theta(pb, params).to_dense();
    const double lambda = 0.7, R_ub = 2.5;
    const Direction d = cg_direction(pb, params, lambda, R_ub, {1e-12, 5000, 9});
    double ours = lambda * d.R_hat;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) ours += d.at(i, j) * grad(i, j);
    double best = 0.0;  // the (0, 0) extreme point
    for (const auto& u : sphere) {
      const Eigen::RowVector3d ug = u.transpose() * grad;
      for (const auto& v : sphere) best = std::min(best, R_ub * (ug.dot(v) + lambda));
    }
    CHECK(ours <= best + 1e-10);
    const double exact = std::min(0.0, R_ub * (lambda - grad.jacobiSvd().singularValues()[0]));
    CHECK(ours == doctest::Approx(exact).epsilon(1e-9));
    CHECK(best - exact <= 0.05 * std::abs(exact) + 1e-12);
  }
}

TEST_CASE("step size rules") {
  CHECK(step_size_beta(0.0, 0.0) == 0.0);
  CHECK(step_size_beta(1.0, 0.0) == 1.0);
  CHECK(step_size_beta(3.0, 2.0) == 1.0);
  CHECK(step_size_beta(1.0, 4.0) == 0.25);
  CHECK(step_size_beta(-1.0, 4.0) == 0.0);

  // direction equal to the current point
  const Eigen::MatrixXd y = Eigen::MatrixXd::Zero(2, 2);
  const Problem pb(gaussian_frame(y), Dictionary(2, 2, {}));
  CHECK(step_size_beta(pb, pb.zero_params(), Direction{}, 1.0, 1.0) == 0.0);
}

TEST_CASE("step size is the exact line search for a quadratic loss") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> z;
  for (int rep = 0; rep < 5; ++rep) {
    Eigen::MatrixXd y(2, 2);
    for (auto& v : y.reshaped()) v = 3.0 * z(rng);
    const double sigma_sq = 1.0 + rep * 0.5;
    const Problem pb(gaussian_frame(y, sigma_sq), Dictionary(2, 2, {{{{0, 0}, 1.0}}}));
    ModelParams params = testing::random_params(pb, 0.3, rep);
    params.R = (dense_theta(params, 2, 2)).jacobiSvd().singularValues().sum();
    const Penalties pen{0.1, 0.4, 0.0};
    const double R_ub = objective_F(pb, params, pen) / pen.lambda_L;
    const Direction d = cg_direction(pb, params, pen.lambda_L, R_ub, {1e-12, 5000, 2});
    REQUIRE(d.active);
    const double beta = step_size_beta(pb, params, d, pen.lambda_L, sigma_sq);
    auto along = [&](double b) {
      ModelParams trial = params;
      for (std::size_t x = 0; x < trial.xi.size(); ++x)
        trial.theta[static_cast<Eigen::Index>(x)] =
            convex_step(params.theta[static_cast<Eigen::Index>(x)], d.at(params.xi[x].i, params.xi[x].j), b);
      trial.R = convex_step(params.R, d.R_hat, b);
      return objective_F(pb, trial, pen);
    };
    CHECK(std::abs(beta - golden_min(along, 0.0, 1.0)) <= 1e-6);
  }
}

TEST_CASE("R_UB") {
  const auto inst = testing::random_instance(4, 3, 2, {LinkKind::gaussian()}, 0.0, 2);
  const Problem pb(inst.data, inst.dict);
  const Penalties pen{0.5, 2.0, 0.0};
  CHECK(update_r_ub(pb, pb.zero_params(), pen) == doctest::Approx(loss(pb, pb.zero_params()) / 2.0));
  ModelParams params = testing::random_params(pb, 0.5, 3);
  params.R = 1.7;
  CHECK(update_r_ub(pb, params, pen) * pen.lambda_L >= pen.lambda_L * params.R);
}

TEST_CASE("C(t) formula") {
  CHECK(compute_Ct({0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0}) == 0.0);
  CHECK(compute_Ct({1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0}) == doctest::Approx(24.0));
  // second branch: 24 * 4 * 1 / 2 + max(6 * 1 * (1 + 3), 24 * 2 * 1) = 48 + 48
  CHECK(compute_Ct({1.0, 10.0, 2.0, 2.0, 1.0, 1.0, 3.0}) == doctest::Approx(96.0));
}

TEST_CASE("theoretical penalties") {
  {
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(100, 100);
    const DataFrame df = gaussian_frame(y);
    const Dictionary dict(100, 100, {{{{0, 0}, 1.0}}});
    const Penalties pen = theoretical_lambdas(df, dict, {-1.0, 1.0});
    CHECK(pen.lambda_L == doctest::Approx(2.0 * std::sqrt(100.0 * std::log(200.0))).epsilon(1e-12));
    const Penalties twice = theoretical_lambdas(df, dict, {-1.0, 1.0}, 2.0);
    CHECK(twice.lambda_L == doctest::Approx(2.0 * pen.lambda_L));
    CHECK(twice.lambda_S == pen.lambda_S);
  }
  {
    SynthSpec spec;  // 150 x 30, runs of 5
    const Dictionary dict = gen_dictionary(spec);
    const DataFrame df = gaussian_frame(Eigen::MatrixXd::Zero(150, 30));
    const Penalties pen = theoretical_lambdas(df, dict, {-1.0, 1.0});
    CHECK(pen.lambda_S == doctest::Approx(120.0 * std::log(180.0)).epsilon(1e-12));
  }
}

TEST_CASE("optimality report on trivial and solved problems") {
  const Problem zero(gaussian_frame(Eigen::MatrixXd::Zero(3, 2)), Dictionary(3, 2, {{{{0, 0}, 1.0}}}));
  const OptimalityReport rep = optimality_report(zero, zero.zero_params(), {1.0, 1.0, 0.0});
  CHECK(rep.sigma1_grad == 0.0);
  CHECK(rep.theta_ok);
  CHECK(rep.alpha_residual == 0.0);
  const std::string text = rep.to_string();
  CHECK(text.find("theta_condition") != std::string::npos);

  Eigen::VectorXd a(3), g(3);
  a << 0.0, 1.0, -2.0;
  g << 0.5, -1.0, 1.0;
  CHECK(alpha_subgradient_residual(a, g, 1.0) == 0.0);
  g[0] = 1.5;
  CHECK(alpha_subgradient_residual(a, g, 1.0) == doctest::Approx(0.5));
}

TEST_CASE("huge penalties stop at zero") {
  const auto inst = testing::random_instance(6, 4, 3, testing::mixed_links(), 0.2, 4);
  const Problem pb(inst.data, inst.dict);
  SolverConfig cfg;
  cfg.pen = {1e6, 1e6, 0.0};
  const FitResult fit = mcgd_fit(pb, cfg);
  CHECK(fit.converged);
  CHECK(fit.iterations <= 2);
  CHECK(fit.params.alpha.norm() == 0.0);
  CHECK(fit.params.theta.norm() == 0.0);
  CHECK(fit.params.R == 0.0);
}

TEST_CASE("empty dictionary reaches the singular-value thresholding solution") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z;
  Eigen::MatrixXd y(5, 5);
  for (auto& v : y.reshaped()) v = z(rng);
  y += 3.0 * Eigen::VectorXd::LinSpaced(5, -1, 1) * Eigen::RowVectorXd::LinSpaced(5, 1, 2);
  const Problem pb(gaussian_frame(y), Dictionary(5, 5, {}));
  SolverConfig cfg;
  cfg.pen = {1.0, 1.5, 0.0};
  cfg.max_iters = 200000;
  cfg.tol_rel_obj = 1e-12;
  cfg.log_atoms = false;
  const FitResult fit = mcgd_fit(pb, cfg);
  double nuclear = 0.0;
  const Eigen::MatrixXd theta = svt(y, cfg.pen.lambda_L, &nuclear);
  const double oracle = 0.5 * (y - theta).squaredNorm() + cfg.pen.lambda_L * nuclear;
  CHECK(fit.final_objective >= oracle - 1e-9);
  CHECK(fit.final_objective - oracle <= 1e-4);
}

TEST_CASE("run invariants on mixed instances") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto inst = testing::random_instance(12, 8, 4, testing::mixed_links(), 0.3, seed);
    const Problem pb(inst.data, inst.dict, inst.data.missing_cells());
    SolverConfig cfg;
    cfg.pen = {0.5, 1.0, 0.0};
    cfg.max_iters = 300;
    cfg.seed = seed;
    const FitResult fit = mcgd_fit(pb, cfg);
    for (std::size_t t = 1; t < fit.trace.size(); ++t) {
      const IterRecord& r = fit.trace[t];
      const double F_prev = fit.trace[t - 1].F;
      CHECK(r.F_mid <= F_prev + 1e-10 * (1 + std::abs(F_prev)));
      CHECK(r.F <= r.F_mid + 1e-10 * (1 + std::abs(r.F_mid)));
      CHECK(r.beta >= 0.0);
      CHECK(r.beta <= 1.0);
      CHECK(r.R_ub >= r.R_prev);
      CHECK(r.R <= r.R_ub * (1 + 1e-12));
    }
    // Theta rebuilt from its rank-one atoms lies in the nuclear ball of radius R
    Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(12, 8);
    for (const RankOneAtom& a : fit.params.atoms) theta += a.weight * a.u * a.v.transpose();
    CHECK(theta.jacobiSvd().singularValues().sum() <= fit.params.R + 1e-8);
    for (std::size_t x = 0; x < fit.params.xi.size(); ++x) {
      const Cell c = fit.params.xi[x];
      CHECK(std::abs(theta(c.i, c.j) - fit.params.theta[static_cast<Eigen::Index>(x)]) <= 1e-9);
    }

    // same seed, same trace
    const FitResult again = mcgd_fit(pb, cfg);
    REQUIRE(again.trace.size() == fit.trace.size());
    for (std::size_t t = 0; t < fit.trace.size(); ++t) {
      CHECK(again.trace[t].F == fit.trace[t].F);
      CHECK(again.trace[t].beta == fit.trace[t].beta);
    }
  }
}

TEST_CASE("R_UB is non-increasing on a Gaussian instance") {
  const auto inst = testing::random_instance(10, 6, 3, {LinkKind::gaussian()}, 0.2, 9);
  const Problem pb(inst.data, inst.dict);
  SolverConfig cfg;
  cfg.pen = {0.3, 0.8, 0.0};
  cfg.max_iters = 200;
  const FitResult fit = mcgd_fit(pb, cfg);
  for (std::size_t t = 2; t < fit.trace.size(); ++t) CHECK(fit.trace[t].R_ub <= fit.trace[t - 1].R_ub * (1 + 1e-12));
}

TEST_CASE("auto alpha update picks the exact form for indicator dictionaries") {
  SynthSpec spec;
  spec.n = 10;
  spec.p = 4;
  spec.seed = 2;
  const Dictionary dict = gen_dictionary(spec);
  const SynthData data = gen_observations(spec, dict, gen_truth(spec, dict));
  const Problem pb(data.observed, dict);
  SolverConfig cfg;
  cfg.pen = {1.0, 2.0, 0.0};
  cfg.max_iters = 50;
  CHECK(mcgd_fit(pb, cfg).alpha_update_used == AlphaUpdate::kExact);
  cfg.alpha_update = AlphaUpdate::kProximal;
  CHECK(mcgd_fit(pb, cfg).alpha_update_used == AlphaUpdate::kProximal);

  const auto inst = testing::random_instance(5, 4, 3, {LinkKind::gaussian()}, 0.0, 1);
  cfg.alpha_update = AlphaUpdate::kExact;
  CHECK_THROWS_AS(mcgd_fit(Problem(inst.data, inst.dict), cfg), Error);
}

TEST_CASE("config validation") {
  SolverConfig cfg;
  cfg.pen = {-1.0, 1.0, 0.0};
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.pen = {1.0, 1.0, 0.0};
  cfg.max_iters = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  CHECK(parse_alpha_update("prox") == AlphaUpdate::kProximal);
  CHECK_THROWS_AS(parse_alpha_update("newton"), Error);
}
