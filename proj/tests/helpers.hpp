#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "loris/model.hpp"
#include "loris/synth.hpp"

namespace testing {

using namespace loris;

/// Random frame with the given column links (cycled), each cell observed
/// with probability 1 - missing, and a dictionary of q random sparse atoms
/// with entries in [-1, 1].
struct Instance {
  DataFrame data;
  Dictionary dict;
};

inline double draw(const LinkKind& link, double m, std::mt19937_64& rng) {
  switch (link.family()) {
    case LinkFamily::kGaussian: return std::normal_distribution<double>(link.param() * m, std::sqrt(link.param()))(rng);
    case LinkFamily::kBernoulli: return std::bernoulli_distribution(1.0 / (1.0 + std::exp(-m)))(rng) ? 1.0 : 0.0;
    case LinkFamily::kPoisson: return double(std::poisson_distribution<int>(std::exp(link.param() * m))(rng));
  }
  return 0.0;
}

inline Dictionary random_dictionary(int n, int p, int q, double density, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::bernoulli_distribution keep(density);
  std::vector<std::vector<DictEntry>> atoms(static_cast<std::size_t>(q));
  for (int k = 0; k < q; ++k) {
    for (int j = 0; j < p; ++j)
      for (int i = 0; i < n; ++i)
        if (keep(rng)) atoms[static_cast<std::size_t>(k)].push_back({{i, j}, unif(rng)});
    if (atoms[static_cast<std::size_t>(k)].empty()) atoms[static_cast<std::size_t>(k)].push_back({{0, 0}, 0.5});
  }
  return Dictionary(n, p, std::move(atoms));
}

inline Instance random_instance(int n, int p, int q, const std::vector<LinkKind>& links, double missing,
                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Instance inst;
  inst.dict = random_dictionary(n, p, q, 0.4, rng);
  std::vector<LinkKind> cols;
  for (int j = 0; j < p; ++j) cols.push_back(links[static_cast<std::size_t>(j) % links.size()]);
  std::normal_distribution<double> mean(0.0, 0.7);
  std::bernoulli_distribution drop(missing);
  std::vector<Observation> obs;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) {
      const double m = mean(rng);
      const double y = draw(cols[static_cast<std::size_t>(j)], m, rng);
      if (!drop(rng)) obs.push_back({i, j, y});
    }
  if (obs.empty()) obs.push_back({0, 0, draw(cols[0], 0.0, rng)});
  inst.data = DataFrame(n, p, cols, std::move(obs));
  return inst;
}

inline std::vector<LinkKind> mixed_links() {
  return {LinkKind::gaussian(), LinkKind::bernoulli(), LinkKind::poisson(), LinkKind::gaussian(2.0),
          LinkKind::poisson(0.5)};
}

/// Random params on the problem's target set.
inline ModelParams random_params(const Problem& problem, double scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, scale);
  ModelParams params = problem.zero_params();
  for (Eigen::Index k = 0; k < params.alpha.size(); ++k) params.alpha[k] = z(rng);
  for (Eigen::Index x = 0; x < params.theta.size(); ++x) params.theta[x] = z(rng);
  params.R = 1.0;
  return params;
}

/// Loss by a direct double loop over the frame, without the Problem's
/// precomputed design.
inline double naive_loss(const DataFrame& data, const Dictionary& dict, const Eigen::VectorXd& alpha,
                         const Eigen::MatrixXd& theta) {
  double total = 0.0;
  for (int i = 0; i < data.rows(); ++i)
    for (int j = 0; j < data.cols(); ++j) {
      const double* y = data.find(i, j);
      if (!y) continue;
      double m = theta(i, j);
      for (int k = 0; k < dict.size(); ++k)
        for (const DictEntry& e : dict.atom(k))
          if (e.cell.i == i && e.cell.j == j) m += alpha[k] * e.value;
      const LinkKind& link = data.link(j);
      total += -(*y) * m + g_eval(link, m) + loss_offset(link, *y);
    }
  return total;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

}  // namespace testing
