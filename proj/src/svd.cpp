#include "loris/svd.hpp"

namespace loris {

Eigen::VectorXd gaussian_start(int length, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd u(length);
  for (int i = 0; i < length; ++i) u[i] = normal(rng);
  const double n = u.norm();
  if (n == 0.0) {
    u.setZero();
    u[0] = 1.0;
    return u;
  }
  return u / n;
}

TopSvd power_top_svd(const SparseMatrix& a, const PowerOptions& opts) {
  if (a.all_zero()) throw Error(ErrorKind::kZeroMatrix, "all entries are zero");
  return power_iterate(
      a.rows(), a.cols(), [&](const Eigen::VectorXd& v) { return a.apply(v); },
      [&](const Eigen::VectorXd& u) { return a.apply_transpose(u); }, opts);
}

}  // namespace loris
