#ifndef CHUNKGLM_FITTER_HPP
#define CHUNKGLM_FITTER_HPP

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "chunkglm/chunk_source.hpp"
#include "chunkglm/family.hpp"
#include "chunkglm/incremental_qr.hpp"

namespace chunkglm {

// ml: b1 = b2 = 0; mbr: b1 = 1, b2 = 0; mjpl: b1 = b2 = 1 with the Jeffreys
// power taken from the FamilyLink.
enum class Estimator { ml, mbr, mjpl };
// ml_scoring and mbr_scoring are the quasi-Fisher scoring updates with the
// bias adjustment switched off (c1 = 0) and on (c1 = 1).
enum class DispersionRule { fixed, moment, ml_scoring, mbr_scoring };
enum class Variant { one_pass, two_pass };

struct WarmStart {
  double delta = 0.05;
  int iterations = 2;
};

struct FitConfig {
  Estimator estimator = Estimator::mjpl;
  // nullopt picks fixed for binomial/poisson and moment otherwise.
  std::optional<DispersionRule> dispersion;
  Variant variant = Variant::two_pass;
  double epsilon = 1e-3;
  int max_iter = 250;
  std::optional<Eigen::VectorXd> beta_start;
  std::optional<WarmStart> warm_start;
  // Evaluate the adjusted score at the returned estimate (two extra passes).
  bool score_diagnostic = true;
  double divergence_limit = 1e8;

  double b1() const noexcept { return estimator == Estimator::ml ? 0.0 : 1.0; }
  double b2() const noexcept { return estimator == Estimator::mjpl ? 1.0 : 0.0; }
  DispersionRule resolved_dispersion(const FamilyLink& fl) const;
  void validate(const FamilyLink& fl, Eigen::Index p) const;
};

std::string to_string(Estimator estimator);
std::string to_string(DispersionRule rule);
std::string to_string(Variant variant);

struct IterationRecord {
  double step;            // sup-norm change in beta
  double phi;             // dispersion after the iteration
  double seconds;         // wall time
  double leverage_trace;  // sum of leverages in the second pass (two-pass only, else NaN)
};

struct FitResult {
  Eigen::VectorXd beta;
  Eigen::VectorXd se;
  double phi = 1.0;
  int iterations = 0;
  bool converged = false;
  std::string reason;
  std::int64_t n = 0;
  Accumulator final_rbar{0};
  double adjusted_score_norm = 0.0;
  std::vector<IterationRecord> per_iteration;
};

/// Chunk-accumulated sums evaluated at one beta during a data pass.
struct PassStats {
  std::int64_t n = 0;
  double moment_sum = 0.0;        // sum w (z - eta)^2
  double deviance_gap = 0.0;      // sum (q - rho)
  double m2_a2 = 0.0;             // sum m^2 a''
  double m3_a3 = 0.0;             // sum m^3 a'''
  double leverage_trace = std::numeric_limits<double>::quiet_NaN();
};

struct IterationState {
  Eigen::VectorXd beta_current;
  Eigen::VectorXd beta_previous;
  // Factor from the previous iteration; absent at the first one-pass step,
  // which then uses h_default for every leverage.
  std::optional<Accumulator> rbar_previous;
  double phi_current = 1.0;
  double h_default = 0.0;
  // Two-pass only: replace phi_current by the moment estimate at
  // beta_current, available after the first pass.
  bool moment_phi = false;
  // Collect the dispersion scoring sums (free-dispersion families only).
  bool scoring_sums = false;
  // Replaces y by (1 - 2 delta) y + delta when set.
  std::optional<double> response_shift;
};

struct IterationResult {
  Eigen::VectorXd beta_next;
  Accumulator accumulator{0};
  PassStats stats;  // at beta_current
  double phi_used = 1.0;
};

/// Plain IWLS step: one pass absorbing (sqrt(w) x, sqrt(w) z).
IterationResult ml_iteration(const IterationState& state, ChunkSource& source,
                             const FamilyLink& fl);

/// Adjusted IWLS step evaluated entirely at beta_current: a first pass for
/// the ML projection and R̄, a second pass for the projection of phi H kappa.
IterationResult adjusted_iteration_two_pass(const IterationState& state, ChunkSource& source,
                                            const FamilyLink& fl, double b1, double b2);

/// Adjusted IWLS step in a single pass, with leverages lagged one iteration
/// (taken from rbar_previous and the weights at beta_previous).
IterationResult adjusted_iteration_one_pass(const IterationState& state, ChunkSource& source,
                                            const FamilyLink& fl, double b1, double b2);

double phi_from_moment(const PassStats& stats, Eigen::Index p);
double phi_from_scoring(const PassStats& stats, double phi, double c1, Eigen::Index p);

/// sum w (z - eta)^2 / (n - p) at beta.
double update_phi_moment(const Eigen::VectorXd& beta, Eigen::Index p, ChunkSource& source,
                         const FamilyLink& fl);
/// One quasi-Fisher scoring step for phi at beta_hat; c1 = 0 is plain ML scoring.
double update_phi_scoring(const Eigen::VectorXd& beta_hat, double phi, double c1,
                          Eigen::Index p, ChunkSource& source, const FamilyLink& fl);

/// Adjusted score (1/phi) Xᵀ W {z - eta + phi H (b1 xi + b2 lambda)} at beta.
Eigen::VectorXd adjusted_score(const Eigen::VectorXd& beta, double phi, double b1, double b2,
                               ChunkSource& source, const FamilyLink& fl);

Eigen::VectorXd standard_errors(const Accumulator& accumulator, double phi);

FitResult fit(const FitConfig& config, ChunkSource& source, const FamilyLink& fl);

}  // namespace chunkglm

#endif  // CHUNKGLM_FITTER_HPP
