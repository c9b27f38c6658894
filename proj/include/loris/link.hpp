#pragma once

#include <string>
#include <string_view>

namespace loris {

enum class LinkFamily { kGaussian, kBernoulli, kPoisson };

/// Exponential-family log-partition function g for one data-frame column.
///
/// The density is h(y) exp(y m - g(m)); g' maps the natural parameter to the
/// mean and g'' is the variance. `param` is the Gaussian scale sigma^2 or the
/// Poisson rate-scale a (g(m) = exp(a m)); it is unused for Bernoulli.
class LinkKind {
 public:
  static LinkKind gaussian(double sigma_sq = 1.0);
  static LinkKind bernoulli();
  static LinkKind poisson(double rate_scale = 1.0);

  LinkFamily family() const { return family_; }
  double param() const { return param_; }

  bool operator==(const LinkKind&) const = default;

 private:
  LinkKind(LinkFamily family, double param) : family_(family), param_(param) {}

  LinkFamily family_;
  double param_;
};

struct CurvatureBounds {
  double sigma_minus_sq = 0.0;
  double sigma_plus_sq = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

double g_eval(const LinkKind& kind, double m);
double g_grad(const LinkKind& kind, double m);
double g_hess(const LinkKind& kind, double m);

/// Exact min/max of g'' over [lo, hi].
CurvatureBounds curvature_bounds(const LinkKind& kind, double lo, double hi);

/// -min_m (-y m + g(m)); adding it to each likelihood term makes the loss
/// nonnegative.
double loss_offset(const LinkKind& kind, double y);

/// True when y lies in the support of the family (finite real, {0,1}, or a
/// nonnegative integer).
bool in_support(const LinkKind& kind, double y);

/// "gaussian", "bernoulli", "poisson". A non-default parameter is appended
/// as ":value".
std::string link_name(const LinkKind& kind);

/// Inverse of link_name. Throws Error(kParse) on unknown names.
LinkKind parse_link(std::string_view text);

}  // namespace loris
