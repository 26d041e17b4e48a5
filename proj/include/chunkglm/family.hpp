#ifndef CHUNKGLM_FAMILY_HPP
#define CHUNKGLM_FAMILY_HPP

#include <string>
#include <string_view>

namespace chunkglm {

enum class Family { binomial, poisson, gaussian, gamma };
enum class Link { logit, probit, cloglog, identity, log, inverse };

// Lower bound on the mean (and 1 - mean for binomial) applied by every
// inverse link.
inline constexpr double kMeanEpsilon = 1e-12;

/// An exponential dispersion family paired with an admissible link.
///
/// `jeffreys_power` is the exponent t applied to the Jeffreys prior when the
/// penalized-likelihood adjustment is requested; it only scales `lambda` in
/// PointQuantities.
class FamilyLink {
 public:
  FamilyLink(Family family, Link link, double jeffreys_power = 1.0);

  Family family() const noexcept { return family_; }
  Link link() const noexcept { return link_; }
  double jeffreys_power() const noexcept { return jeffreys_power_; }

  // phi is identically 1 for binomial and poisson.
  bool dispersion_fixed() const noexcept {
    return family_ == Family::binomial || family_ == Family::poisson;
  }
  bool canonical() const noexcept;

  FamilyLink with_power(double t) const { return {family_, link_, t}; }

 private:
  Family family_;
  Link link_;
  double jeffreys_power_;
};

bool admissible(Family family, Link link) noexcept;
Link default_link(Family family) noexcept;

Family parse_family(std::string_view name);
Link parse_link(std::string_view name);
std::string to_string(Family family);
std::string to_string(Link link);

/// Per-observation quantities entering the (adjusted) IWLS step.
struct PointQuantities {
  double mu;
  double d;       // dmu/deta
  double dprime;  // d2mu/deta2
  double v;       // V(mu)
  double vprime;  // dV/dmu
  double w;       // working weight m d^2 / v
  double z;       // working variate eta + (y - mu) / d
  double xi;
  double lambda;
};

struct DeviancePoint {
  double q;    // deviance residual
  double rho;  // its expectation m a'(-m/phi)
};

struct ADerivatives {
  double first;
  double second;
  double third;
};

double inverse_link(double eta, const FamilyLink& fl);

PointQuantities point_quantities(double eta, double y, double m, const FamilyLink& fl);

/// Deviance residual q = -2m{y theta - b(theta) - c1(y)} with c1(y) the
/// supremum of y theta - b(theta), so q is the usual unit deviance times m.
/// Throws NotApplicable for binomial/poisson with phi != 1.
DeviancePoint deviance_point(double eta, double y, double m, double phi,
                             const FamilyLink& fl);

/// Derivatives of a(u) at u = -m/phi. Only gaussian and gamma have a free
/// dispersion; other families throw NotApplicable.
ADerivatives a_derivatives(double m, double phi, const FamilyLink& fl);

}  // namespace chunkglm

#endif  // CHUNKGLM_FAMILY_HPP
