#include "loris/link.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "loris/error.hpp"

namespace loris {

namespace {

double checked(double value, const char* what, double m) {
  if (!std::isfinite(value)) {
    std::ostringstream os;
    os << what << " overflow at m=" << m;
    throw Error(ErrorKind::kNonFinite, os.str());
  }
  return value;
}

double softplus(double m) {
  if (m > 30.0) return m + std::exp(-m);
  if (m < -30.0) return std::exp(m);
  return std::log1p(std::exp(m));
}

double sigmoid(double m) {
  if (m >= 0.0) return 1.0 / (1.0 + std::exp(-m));
  const double e = std::exp(m);
  return e / (1.0 + e);
}

}  // namespace

LinkKind LinkKind::gaussian(double sigma_sq) {
  if (!(sigma_sq > 0.0) || !std::isfinite(sigma_sq)) {
    throw Error(ErrorKind::kInvalidArgument, "gaussian scale must be finite and > 0");
  }
  return LinkKind(LinkFamily::kGaussian, sigma_sq);
}

LinkKind LinkKind::bernoulli() { return LinkKind(LinkFamily::kBernoulli, 0.0); }

LinkKind LinkKind::poisson(double rate_scale) {
  // A negative rate-scale gives a negative mean and a likelihood that is
  // unbounded below for y > 0, so only a > 0 is accepted.
  if (!(rate_scale > 0.0) || !std::isfinite(rate_scale)) {
    throw Error(ErrorKind::kInvalidArgument, "poisson rate-scale must be finite and > 0");
  }
  return LinkKind(LinkFamily::kPoisson, rate_scale);
}

double g_eval(const LinkKind& kind, double m) {
  switch (kind.family()) {
    case LinkFamily::kGaussian: return checked(0.5 * m * m * kind.param(), "g", m);
    case LinkFamily::kBernoulli: return checked(softplus(m), "g", m);
    case LinkFamily::kPoisson: return checked(std::exp(kind.param() * m), "g", m);
  }
  return 0.0;
}

double g_grad(const LinkKind& kind, double m) {
  switch (kind.family()) {
    case LinkFamily::kGaussian: return checked(m * kind.param(), "g'", m);
    case LinkFamily::kBernoulli: return checked(sigmoid(m), "g'", m);
    case LinkFamily::kPoisson: {
      const double a = kind.param();
      return checked(a * std::exp(a * m), "g'", m);
    }
  }
  return 0.0;
}

double g_hess(const LinkKind& kind, double m) {
  switch (kind.family()) {
    case LinkFamily::kGaussian: return kind.param();
    case LinkFamily::kBernoulli: {
      if (!std::isfinite(m)) throw Error(ErrorKind::kNonFinite, "g'' at non-finite m");
      const double e = std::exp(-std::abs(m));
      return e / ((1.0 + e) * (1.0 + e));
    }
    case LinkFamily::kPoisson: {
      const double a = kind.param();
      return checked(a * a * std::exp(a * m), "g''", m);
    }
  }
  return 0.0;
}

CurvatureBounds curvature_bounds(const LinkKind& kind, double lo, double hi) {
  if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw Error(ErrorKind::kInvalidArgument, "curvature window must satisfy lo <= hi");
  }
  CurvatureBounds out;
  out.lo = lo;
  out.hi = hi;
  switch (kind.family()) {
    case LinkFamily::kGaussian:
      out.sigma_minus_sq = out.sigma_plus_sq = kind.param();
      break;
    case LinkFamily::kBernoulli: {
      // g'' is even and decreasing in |x|.
      const double near = (lo <= 0.0 && hi >= 0.0) ? 0.0 : std::min(std::abs(lo), std::abs(hi));
      const double far = std::max(std::abs(lo), std::abs(hi));
      out.sigma_plus_sq = g_hess(kind, near);
      out.sigma_minus_sq = g_hess(kind, far);
      break;
    }
    case LinkFamily::kPoisson:
      // a > 0, so g'' is increasing.
      out.sigma_minus_sq = g_hess(kind, lo);
      out.sigma_plus_sq = g_hess(kind, hi);
      break;
  }
  return out;
}

double loss_offset(const LinkKind& kind, double y) {
  switch (kind.family()) {
    case LinkFamily::kGaussian: return y * y / (2.0 * kind.param());
    case LinkFamily::kBernoulli: {
      auto xlogx = [](double x) { return x > 0.0 ? x * std::log(x) : 0.0; };
      return -(xlogx(y) + xlogx(1.0 - y));
    }
    case LinkFamily::kPoisson: {
      if (y <= 0.0) return 0.0;
      const double r = y / kind.param();
      return r * (std::log(r) - 1.0);
    }
  }
  return 0.0;
}

bool in_support(const LinkKind& kind, double y) {
  if (!std::isfinite(y)) return false;
  switch (kind.family()) {
    case LinkFamily::kGaussian: return true;
    case LinkFamily::kBernoulli: return y == 0.0 || y == 1.0;
    case LinkFamily::kPoisson: return y >= 0.0 && std::floor(y) == y;
  }
  return false;
}

std::string link_name(const LinkKind& kind) {
  std::string base;
  double def = 0.0;
  switch (kind.family()) {
    case LinkFamily::kGaussian: base = "gaussian"; def = 1.0; break;
    case LinkFamily::kBernoulli: return "bernoulli";
    case LinkFamily::kPoisson: base = "poisson"; def = 1.0; break;
  }
  if (kind.param() == def) return base;
  std::ostringstream os;
  os.precision(17);
  os << base << ':' << kind.param();
  return os.str();
}

LinkKind parse_link(std::string_view text) {
  const auto colon = text.find(':');
  const std::string_view name = text.substr(0, colon);
  double param = 1.0;
  if (colon != std::string_view::npos) {
    const std::string value(text.substr(colon + 1));
    try {
      std::size_t used = 0;
      param = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::exception&) {
      throw Error(ErrorKind::kParse, "bad link parameter in '" + std::string(text) + "'");
    }
  }
  if (name == "gaussian") return LinkKind::gaussian(param);
  if (name == "poisson") return LinkKind::poisson(param);
  if (name == "bernoulli" && colon == std::string_view::npos) return LinkKind::bernoulli();
  throw Error(ErrorKind::kParse, "unknown column type '" + std::string(text) + "'");
}

}  // namespace loris
