#include "loris/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "loris/error.hpp"

namespace loris {

void SynthSpec::validate() const {
  if (n < 1 || p < 1) throw Error(ErrorKind::kDimensionMismatch, "n and p must be >= 1");
  if (group_size < 1) throw Error(ErrorKind::kInvalidArgument, "group_size must be >= 1");
  if ((static_cast<long long>(n) * p) % group_size != 0) {
    throw Error(ErrorKind::kDimensionMismatch, "n * p must be a multiple of group_size");
  }
  if (rank_r < 0 || rank_r > std::min(n, p)) throw Error(ErrorKind::kInvalidArgument, "rank_r out of range");
  auto frac = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (!frac(sparsity_frac) || !frac(missing_frac)) {
    throw Error(ErrorKind::kInvalidArgument, "fractions must lie in [0,1]");
  }
  if (!(alpha_scale >= 0.0) || !(theta_scale >= 0.0)) throw Error(ErrorKind::kInvalidArgument, "scales must be >= 0");
  if (links.empty()) throw Error(ErrorKind::kInvalidArgument, "at least one column link is required");
}

Dictionary gen_dictionary(const SynthSpec& spec) {
  spec.validate();
  std::vector<std::vector<DictEntry>> atoms(static_cast<std::size_t>(spec.q()));
  for (int j = 0; j < spec.p; ++j) {
    for (int i = 0; i < spec.n; ++i) {
      const long long lin = static_cast<long long>(j) * spec.n + i;
      atoms[static_cast<std::size_t>(lin / spec.group_size)].push_back({{i, j}, 1.0});
    }
  }
  return Dictionary(spec.n, spec.p, std::move(atoms));
}

namespace {

Eigen::MatrixXd orthonormal_columns(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd g(rows, cols);
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) g(r, c) = normal(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  return qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
}

double nuclear_norm(const Eigen::MatrixXd& a) {
  if (a.size() == 0) return 0.0;
  return Eigen::BDCSVD<Eigen::MatrixXd>(a).singularValues().sum();
}

}  // namespace

ModelParams gen_truth(const SynthSpec& spec, const Dictionary& dict) {
  spec.validate();
  if (dict.rows() != spec.n || dict.cols() != spec.p) {
    throw Error(ErrorKind::kDimensionMismatch, "dictionary shape differs from n x p");
  }
  std::mt19937_64 rng(spec.seed);
  const int q = dict.size();

  ModelParams truth;
  truth.alpha = Eigen::VectorXd::Zero(q);
  const int active = static_cast<int>(std::ceil(spec.sparsity_frac * q - 1e-9));
  std::vector<int> order(static_cast<std::size_t>(q));
  std::iota(order.begin(), order.end(), 0);
  for (int k = 0; k < active; ++k) {
    std::uniform_int_distribution<int> pick(k, q - 1);
    std::swap(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(pick(rng))]);
  }
  std::bernoulli_distribution coin(0.5);
  std::vector<int> support(order.begin(), order.begin() + active);
  std::sort(support.begin(), support.end());
  for (int k : support) truth.alpha[k] = coin(rng) ? spec.alpha_scale : -spec.alpha_scale;

  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(spec.n, spec.p);
  if (spec.rank_r > 0) {
    const Eigen::MatrixXd u = orthonormal_columns(spec.n, spec.rank_r, rng);
    const Eigen::MatrixXd v = orthonormal_columns(spec.p, spec.rank_r, rng);
    theta = u * v.transpose();
    double scale = spec.theta_scale;
    if (scale == 0.0) {
      const double peak = theta.cwiseAbs().maxCoeff();
      scale = peak > 0.0 ? 1.0 / peak : 1.0;
    }
    theta *= scale;
  }

  // least-squares removal of the span of the active atoms
  if (!support.empty()) {
    const auto s = static_cast<Eigen::Index>(support.size());
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(s, s);
    Eigen::VectorXd rhs(s);
    const Eigen::MatrixXd full_gram = dict.dense_gram();
    for (Eigen::Index a = 0; a < s; ++a) {
      double ip = 0.0;
      for (const DictEntry& d : dict.atom(support[a])) ip += d.value * theta(d.cell.i, d.cell.j);
      rhs[a] = ip;
      for (Eigen::Index b = 0; b < s; ++b) gram(a, b) = full_gram(support[a], support[b]);
    }
    const Eigen::VectorXd coef = gram.completeOrthogonalDecomposition().solve(rhs);
    for (Eigen::Index a = 0; a < s; ++a) {
      for (const DictEntry& d : dict.atom(support[a])) theta(d.cell.i, d.cell.j) -= coef[a] * d.value;
    }
  }

  truth.xi = all_cells(spec.n, spec.p);
  truth.theta.resize(static_cast<Eigen::Index>(truth.xi.size()));
  for (std::size_t x = 0; x < truth.xi.size(); ++x) {
    truth.theta[static_cast<Eigen::Index>(x)] = theta(truth.xi[x].i, truth.xi[x].j);
  }
  truth.R = nuclear_norm(theta);
  return truth;
}

SynthData gen_observations(const SynthSpec& spec, const Dictionary& dict, const ModelParams& truth) {
  spec.validate();
  std::mt19937_64 rng(spec.seed ^ 0x5bd1e9955bd1e995ULL);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<LinkKind> links;
  std::vector<std::string> labels;
  for (int j = 0; j < spec.p; ++j) {
    links.push_back(spec.link(j));
    labels.push_back("V" + std::to_string(j + 1));
  }
  std::vector<Observation> observed;
  SynthData out;
  for (int i = 0; i < spec.n; ++i) {
    for (int j = 0; j < spec.p; ++j) {
      const double m = linear_predictor(dict, truth, {i, j});
      const LinkKind& link = links[static_cast<std::size_t>(j)];
      double y = 0.0;
      switch (link.family()) {
        case LinkFamily::kGaussian: {
          std::normal_distribution<double> normal(link.param() * m, std::sqrt(link.param()));
          y = normal(rng);
          break;
        }
        case LinkFamily::kBernoulli: {
          std::bernoulli_distribution draw(g_grad(link, m));
          y = draw(rng) ? 1.0 : 0.0;
          break;
        }
        case LinkFamily::kPoisson: {
          const double mean = g_grad(link, m);
          if (mean > 0.0) {
            std::poisson_distribution<long long> draw(mean);
            y = static_cast<double>(draw(rng));
          }
          break;
        }
      }
      const bool missing = unif(rng) < spec.missing_frac;
      (missing ? out.held_out : observed).push_back({i, j, y});
    }
  }
  out.observed = DataFrame(spec.n, spec.p, std::move(links), std::move(observed), std::move(labels));
  return out;
}

Eigen::MatrixXd svt(const Eigen::MatrixXd& z, double lambda, double* nuclear) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(z, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::VectorXd s = (svd.singularValues().array() - lambda).cwiseMax(0.0);
  if (nuclear != nullptr) *nuclear = s.sum();
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

BaselineResult two_step_baseline_detailed(const DataFrame& data, const Dictionary& dict, double lambda_L, double tol,
                                          int max_iters) {
  if (dict.rows() != data.rows() || dict.cols() != data.cols()) {
    throw Error(ErrorKind::kDimensionMismatch, "dictionary shape differs from the data");
  }
  if (!(lambda_L >= 0.0)) throw Error(ErrorKind::kInvalidArgument, "lambda_L must be >= 0");
  const int q = dict.size();
  for (int k = 0; k < q; ++k) {
    for (const DictEntry& d : dict.atom(k)) {
      if (d.value != dict.atom(k).front().value || d.value == 0.0 || dict.at(d.cell).size() != 1) {
        throw Error(ErrorKind::kUnsupportedDictionary, "two-step baseline needs disjoint constant atoms");
      }
    }
  }

  BaselineResult out;
  ModelParams& est = out.params;
  est.alpha = Eigen::VectorXd::Zero(q);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(q);
  Eigen::VectorXi count = Eigen::VectorXi::Zero(q);
  for (const Observation& o : data.entries()) {
    const auto at = dict.at({o.i, o.j});
    if (at.empty()) continue;
    sum[at.front().k] += o.y;
    ++count[at.front().k];
  }
  for (int k = 0; k < q; ++k) {
    if (count[k] > 0) est.alpha[k] = sum[k] / count[k] / dict.atom(k).front().value;
  }

  const int n = data.rows();
  const int p = data.cols();
  Eigen::MatrixXd resid = Eigen::MatrixXd::Zero(n, p);
  Eigen::MatrixXd mask = Eigen::MatrixXd::Zero(n, p);
  for (const Observation& o : data.entries()) {
    double fitted = 0.0;
    for (const AtomValue& a : dict.at({o.i, o.j})) fitted += est.alpha[a.k] * a.value;
    resid(o.i, o.j) = o.y - fitted;
    mask(o.i, o.j) = 1.0;
  }
  const Eigen::MatrixXd unobserved = Eigen::MatrixXd::Ones(n, p) - mask;

  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(n, p);
  double nuclear = 0.0;
  for (int it = 1; it <= max_iters; ++it) {
    const Eigen::MatrixXd z = resid + unobserved.cwiseProduct(theta);
    Eigen::MatrixXd next = svt(z, lambda_L, &nuclear);
    const double change = (next - theta).norm();
    const double base = theta.norm();
    theta = std::move(next);
    out.iterations = it;
    out.objective.push_back(0.5 * mask.cwiseProduct(resid - theta).squaredNorm() + lambda_L * nuclear);
    if (change == 0.0 || (base > 0.0 && change / base < tol)) break;
  }

  est.xi = all_cells(n, p);
  est.theta.resize(static_cast<Eigen::Index>(est.xi.size()));
  for (std::size_t x = 0; x < est.xi.size(); ++x) {
    est.theta[static_cast<Eigen::Index>(x)] = theta(est.xi[x].i, est.xi[x].j);
  }
  est.R = nuclear;
  return out;
}

ModelParams two_step_baseline(const DataFrame& data, const Dictionary& dict, double lambda_L) {
  return two_step_baseline_detailed(data, dict, lambda_L).params;
}

ErrorReport error_metrics(const ModelParams& truth, const ModelParams& estimate, const Dictionary& dict,
                          const DataFrame& data, const std::vector<Observation>& held_out,
                          const std::vector<LinkKind>& mean_links) {
  if (truth.alpha.size() != estimate.alpha.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "alpha lengths differ");
  }
  if (static_cast<int>(mean_links.size()) != data.cols()) {
    throw Error(ErrorKind::kDimensionMismatch, "one mean link per column is required");
  }
  ErrorReport rep;
  rep.alpha_sq_error = (truth.alpha - estimate.alpha).squaredNorm();
  rep.theta_sq_error =
      (dense_theta(truth, data.rows(), data.cols()) - dense_theta(estimate, data.rows(), data.cols())).squaredNorm();
  for (const Observation& o : held_out) {
    const double mean = g_grad(mean_links[static_cast<std::size_t>(o.j)], linear_predictor(dict, estimate, {o.i, o.j}));
    switch (data.link(o.j).family()) {
      case LinkFamily::kGaussian:
        rep.gaussian_mse += (mean - o.y) * (mean - o.y);
        ++rep.gaussian_count;
        break;
      case LinkFamily::kPoisson:
        rep.poisson_mse += (mean - o.y) * (mean - o.y);
        ++rep.poisson_count;
        break;
      case LinkFamily::kBernoulli:
        rep.bernoulli_error += ((mean > 0.5 ? 1.0 : 0.0) != o.y) ? 1.0 : 0.0;
        ++rep.bernoulli_count;
        break;
    }
  }
  if (rep.gaussian_count > 0) rep.gaussian_mse /= rep.gaussian_count;
  if (rep.poisson_count > 0) rep.poisson_mse /= rep.poisson_count;
  if (rep.bernoulli_count > 0) rep.bernoulli_error /= rep.bernoulli_count;
  return rep;
}

}  // namespace loris
