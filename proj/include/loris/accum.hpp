#pragma once

#include <Eigen/Core>

namespace loris {

// Sums are carried as unevaluated pairs hi + lo (error-free two-sum). The
// rounded result then depends on the grouping of the terms only when the
// exact sum falls within ~1e-30 relative of a rounding boundary, so partial
// sums merged from any partition of the entries round to the same double as
// one sequential pass.

inline void two_sum(double a, double b, double& s, double& e) {
  s = a + b;
  const double bb = s - a;
  e = (a - (s - bb)) + (b - bb);
}

struct Accum {
  double hi = 0.0;
  double lo = 0.0;

  void add(double x) {
    double s;
    double e;
    two_sum(hi, x, s, e);
    hi = s;
    lo += e;
  }

  void merge(const Accum& other) {
    double s;
    double e;
    two_sum(hi, other.hi, s, e);
    hi = s;
    lo += e + other.lo;
  }

  double value() const { return hi + lo; }
};

struct AccumVec {
  Eigen::VectorXd hi;
  Eigen::VectorXd lo;

  AccumVec() = default;
  explicit AccumVec(Eigen::Index n) : hi(Eigen::VectorXd::Zero(n)), lo(Eigen::VectorXd::Zero(n)) {}

  Eigen::Index size() const { return hi.size(); }

  void add(Eigen::Index i, double x) {
    double s;
    double e;
    two_sum(hi[i], x, s, e);
    hi[i] = s;
    lo[i] += e;
  }

  void merge(const AccumVec& other) {
    for (Eigen::Index i = 0; i < hi.size(); ++i) {
      double s;
      double e;
      two_sum(hi[i], other.hi[i], s, e);
      hi[i] = s;
      lo[i] += e + other.lo[i];
    }
  }

  Eigen::VectorXd value() const { return hi + lo; }
};

}  // namespace loris
