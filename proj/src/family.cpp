#include "chunkglm/family.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/polygamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "chunkglm/errors.hpp"

namespace chunkglm {

namespace {

constexpr double kDerivativeFloor = std::numeric_limits<double>::epsilon();

struct LinkValues {
  double mu;
  double d;
  double dprime;
};

double clamp_mean(double mu, Family family) {
  if (family == Family::binomial) {
    return std::clamp(mu, kMeanEpsilon, 1.0 - kMeanEpsilon);
  }
  if (family == Family::gaussian) return mu;
  return std::max(mu, kMeanEpsilon);
}

LinkValues evaluate_link(double eta, const FamilyLink& fl) {
  const Family family = fl.family();
  switch (fl.link()) {
    case Link::logit: {
      const double mu = clamp_mean(1.0 / (1.0 + std::exp(-eta)), family);
      const double d = mu * (1.0 - mu);
      return {mu, d, d * (1.0 - 2.0 * mu)};
    }
    case Link::probit: {
      const double mu = clamp_mean(0.5 * std::erfc(-eta / std::numbers::sqrt2), family);
      const double density = std::exp(-0.5 * eta * eta) / std::sqrt(2.0 * std::numbers::pi);
      return {mu, std::max(density, kDerivativeFloor), -eta * density};
    }
    case Link::cloglog: {
      // d = exp(eta - e^eta) is evaluated in log space so that it does not
      // underflow before the mean does.
      const double expeta = std::exp(eta);
      const double mu = clamp_mean(-std::expm1(-expeta), family);
      const double d = std::exp(eta - expeta);
      const double dprime = d == 0.0 ? 0.0 : d * (1.0 - expeta);
      return {mu, std::max(d, kDerivativeFloor), dprime};
    }
    case Link::identity:
      return {clamp_mean(eta, family), 1.0, 0.0};
    case Link::log: {
      const double mu = clamp_mean(std::exp(eta), family);
      return {mu, mu, mu};
    }
    case Link::inverse: {
      double mu = 1.0 / eta;
      if (!(mu > kMeanEpsilon)) mu = kMeanEpsilon;
      return {mu, -mu * mu, 2.0 * mu * mu * mu};
    }
  }
  return {};
}

void variance(double mu, Family family, double& v, double& vprime) {
  switch (family) {
    case Family::binomial:
      v = mu * (1.0 - mu);
      vprime = 1.0 - 2.0 * mu;
      return;
    case Family::poisson:
      v = mu;
      vprime = 1.0;
      return;
    case Family::gaussian:
      v = 1.0;
      vprime = 0.0;
      return;
    case Family::gamma:
      v = mu * mu;
      vprime = 2.0 * mu;
      return;
  }
}

// x log(x / y) with 0 log 0 := 0
double xlogx_over(double x, double y) { return x > 0.0 ? x * std::log(x / y) : 0.0; }

}  // namespace

FamilyLink::FamilyLink(Family family, Link link, double jeffreys_power)
    : family_(family), link_(link), jeffreys_power_(jeffreys_power) {
  if (!admissible(family, link)) {
    throw ConfigError("link '" + to_string(link) + "' is not available for family '" +
                      to_string(family) + "'");
  }
  if (!(jeffreys_power > 0.0) || !std::isfinite(jeffreys_power)) {
    throw ConfigError("jeffreys power must be a positive finite number");
  }
}

bool FamilyLink::canonical() const noexcept {
  return (family_ == Family::binomial && link_ == Link::logit) ||
         (family_ == Family::poisson && link_ == Link::log) ||
         (family_ == Family::gaussian && link_ == Link::identity) ||
         (family_ == Family::gamma && link_ == Link::inverse);
}

bool admissible(Family family, Link link) noexcept {
  switch (family) {
    case Family::binomial:
      return link == Link::logit || link == Link::probit || link == Link::cloglog;
    case Family::poisson:
      return link == Link::log;
    case Family::gaussian:
      return link == Link::identity;
    case Family::gamma:
      return link == Link::log || link == Link::inverse;
  }
  return false;
}

Link default_link(Family family) noexcept {
  switch (family) {
    case Family::binomial:
      return Link::logit;
    case Family::poisson:
      return Link::log;
    case Family::gaussian:
      return Link::identity;
    case Family::gamma:
      return Link::inverse;
  }
  return Link::identity;
}

Family parse_family(std::string_view name) {
  if (name == "binomial") return Family::binomial;
  if (name == "poisson") return Family::poisson;
  if (name == "gaussian") return Family::gaussian;
  if (name == "gamma" || name == "Gamma") return Family::gamma;
  throw ConfigError("unknown family '" + std::string(name) + "'");
}

Link parse_link(std::string_view name) {
  if (name == "logit") return Link::logit;
  if (name == "probit") return Link::probit;
  if (name == "cloglog") return Link::cloglog;
  if (name == "identity") return Link::identity;
  if (name == "log") return Link::log;
  if (name == "inverse") return Link::inverse;
  throw ConfigError("unknown link '" + std::string(name) + "'");
}

std::string to_string(Family family) {
  switch (family) {
    case Family::binomial:
      return "binomial";
    case Family::poisson:
      return "poisson";
    case Family::gaussian:
      return "gaussian";
    case Family::gamma:
      return "gamma";
  }
  return "?";
}

std::string to_string(Link link) {
  switch (link) {
    case Link::logit:
      return "logit";
    case Link::probit:
      return "probit";
    case Link::cloglog:
      return "cloglog";
    case Link::identity:
      return "identity";
    case Link::log:
      return "log";
    case Link::inverse:
      return "inverse";
  }
  return "?";
}

double inverse_link(double eta, const FamilyLink& fl) { return evaluate_link(eta, fl).mu; }

PointQuantities point_quantities(double eta, double y, double m, const FamilyLink& fl) {
  const LinkValues lv = evaluate_link(eta, fl);
  PointQuantities pq{};
  pq.mu = lv.mu;
  pq.d = lv.d;
  pq.dprime = lv.dprime;
  variance(lv.mu, fl.family(), pq.v, pq.vprime);
  pq.w = m * lv.d * lv.d / pq.v;
  pq.z = eta + (y - lv.mu) / lv.d;
  pq.xi = lv.dprime / (2.0 * lv.d * pq.w);
  // v' = d'/d at canonical links, so lambda vanishes identically; it is set
  // to zero rather than left to cancellation error.
  if (fl.canonical()) {
    pq.lambda = 0.0;
  } else {
    pq.lambda = 0.5 * fl.jeffreys_power() *
                (lv.dprime / (lv.d * pq.w) - pq.vprime / (m * lv.d));
  }
  return pq;
}

DeviancePoint deviance_point(double eta, double y, double m, double phi,
                             const FamilyLink& fl) {
  const double mu = inverse_link(eta, fl);
  switch (fl.family()) {
    case Family::gaussian: {
      const double r = y - mu;
      return {m * r * r, m * a_derivatives(m, phi, fl).first};
    }
    case Family::gamma:
      return {2.0 * m * ((y - mu) / mu - std::log(y / mu)),
              m * a_derivatives(m, phi, fl).first};
    case Family::binomial:
    case Family::poisson:
      break;
  }
  if (phi != 1.0) {
    throw NotApplicable("family '" + to_string(fl.family()) +
                        "' has dispersion fixed at 1");
  }
  if (fl.family() == Family::binomial) {
    return {2.0 * m * (xlogx_over(y, mu) + xlogx_over(1.0 - y, 1.0 - mu)), 0.0};
  }
  return {2.0 * m * (xlogx_over(y, mu) - (y - mu)), 0.0};
}

ADerivatives a_derivatives(double m, double phi, const FamilyLink& fl) {
  if (!(phi > 0.0)) throw ConfigError("dispersion must be positive");
  const double u = -m / phi;
  switch (fl.family()) {
    case Family::gaussian:
      // a(u) = log(2 pi) - log(-u)
      return {-1.0 / u, 1.0 / (u * u), -2.0 / (u * u * u)};
    case Family::gamma: {
      // a(u) = 2{log Gamma(-u) + u log(-u) - u}, written in s = -u.
      const double s = -u;
      return {2.0 * (std::log(s) - boost::math::digamma(s)),
              2.0 * (boost::math::trigamma(s) - 1.0 / s),
              -2.0 * (boost::math::polygamma(2, s) + 1.0 / (s * s))};
    }
    case Family::binomial:
    case Family::poisson:
      break;
  }
  throw NotApplicable("family '" + to_string(fl.family()) + "' has no free dispersion");
}

}  // namespace chunkglm
