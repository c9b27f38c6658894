#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <utility>

#include <Eigen/Core>

#include "loris/error.hpp"
#include "loris/sparse.hpp"

namespace loris {

struct TopSvd {
  double sigma1 = 0.0;
  Eigen::VectorXd u1;
  Eigen::VectorXd v1;
  int iters = 0;
  bool converged = false;
};

struct PowerOptions {
  double delta = 1e-9;
  int max_iters = 1000;
  std::uint64_t seed = 0;
};

/// Starting vector u(0) ~ N(0, I) of the given length, unit-normalized.
Eigen::VectorXd gaussian_start(int length, std::uint64_t seed);

/// Alternating power iteration v <- A^T u / |.|, u <- A v / |.| on a matrix
/// given only through its products. `forward(v)` returns A v (length rows)
/// and `backward(u)` returns A^T u (length cols).
///
/// The Rayleigh estimate sigma = |A v| increases monotonically to sigma_1.
/// Iteration stops once both the last change and the geometric-tail estimate
/// of the remaining error (change * r / (1 - r), r the observed contraction
/// ratio) fall below delta * sigma. A near-degenerate spectral gap runs to
/// max_iters and returns converged = false with the last estimate.
template <typename Forward, typename Backward>
TopSvd power_iterate(int rows, int cols, Forward&& forward, Backward&& backward, const PowerOptions& opts) {
  if (rows <= 0 || cols <= 0) throw Error(ErrorKind::kZeroMatrix, "empty matrix");
  if (!(opts.delta > 0.0 && opts.delta < 1.0)) throw Error(ErrorKind::kInvalidArgument, "delta must be in (0,1)");
  if (opts.max_iters < 1) throw Error(ErrorKind::kInvalidArgument, "max_iters must be >= 1");

  TopSvd out;
  out.u1 = gaussian_start(rows, opts.seed);
  double sigma = 0.0;
  double last_change = std::numeric_limits<double>::infinity();
  constexpr double kRoundoff = 8.0 * std::numeric_limits<double>::epsilon();

  for (int it = 1; it <= opts.max_iters; ++it) {
    Eigen::VectorXd v = backward(out.u1);
    const double nv = v.norm();
    if (nv == 0.0) {
      if (it == 1) throw Error(ErrorKind::kZeroMatrix, "A^T u vanished for a random start");
      break;
    }
    out.v1 = v / nv;
    Eigen::VectorXd w = forward(out.v1);
    const double next = w.norm();
    if (next == 0.0) throw Error(ErrorKind::kZeroMatrix, "A v vanished");
    out.u1 = w / next;
    out.iters = it;

    const double change = std::abs(next - sigma);
    sigma = next;
    if (it >= 2) {
      if (change <= kRoundoff * sigma) {
        out.converged = true;
        break;
      }
      const double ratio = change / last_change;
      if (ratio < 1.0 && change <= opts.delta * sigma && change * ratio / (1.0 - ratio) <= opts.delta * sigma) {
        out.converged = true;
        break;
      }
    }
    last_change = change;
  }
  out.sigma1 = sigma;
  return out;
}

/// Top singular triple of a sparse matrix. Throws Error(kZeroMatrix) when A
/// has no nonzero entry.
TopSvd power_top_svd(const SparseMatrix& a, const PowerOptions& opts = {});

}  // namespace loris
