#ifndef CHUNKGLM_HIGHDIM_SIM_HPP
#define CHUNKGLM_HIGHDIM_SIM_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "chunkglm/fitter.hpp"

namespace chunkglm {

enum class BetaShape {
  equispaced,  // p points from -10 to 10
  sparse,      // 20% at -10, 20% at 10, the rest 0
};

BetaShape parse_beta_shape(std::string_view name);
std::string to_string(BetaShape shape);

/// One point of the logistic-regression experiment: n rows, p = ceil(n kappa)
/// standard-normal covariates, intercept alpha = rho gamma and slopes scaled
/// to ||beta||_2 = gamma sqrt(1 - rho^2).
struct SimSetting {
  double kappa = 0.1;
  Eigen::Index n = 2000;
  double rho2 = 0.0;
  double gamma = 1.0;
  BetaShape shape = BetaShape::equispaced;
  int reps = 5;
  std::uint64_t seed = 1;
  // Whether the ML estimate exists asymptotically at (kappa, gamma); supplied
  // by the caller, it selects the rescaling factor.
  bool mle_exists = true;

  Eigen::Index p() const;
  double rho() const;
  double alpha() const { return rho() * gamma; }
  double gamma0() const;
  void validate() const;
};

struct Replicate {
  Eigen::MatrixXd x;  // n x p, no intercept column
  Eigen::VectorXd y;
  double alpha = 0.0;
  Eigen::VectorXd beta;
};

Eigen::VectorXd beta_star(BetaShape shape, Eigen::Index p);

/// Deterministic in (setting.seed, rep_index): each replicate draws from its
/// own seeded engine, so replicates can be generated in any order.
Replicate generate(const SimSetting& setting, int rep_index);

double rescale_factor(double kappa, double gamma, double rho, bool mle_exists);
Eigen::VectorXd rescale_estimate(const Eigen::VectorXd& beta_tilde, double kappa, double gamma,
                                 double rho, bool mle_exists);

struct LineFit {
  double slope;
  double intercept;
};

/// Least-squares line of `estimates` on `truth` (with intercept).
LineFit recovery_fit(const Eigen::VectorXd& estimates, const Eigen::VectorXd& truth);
inline double recovery_slope(const Eigen::VectorXd& estimates, const Eigen::VectorXd& truth) {
  return recovery_fit(estimates, truth).slope;
}

struct RepOutcome {
  int rep = 0;
  bool ok = false;
  std::string error;
  bool converged = false;
  int iterations = 0;
  double seconds = 0.0;
  LineFit fit{0.0, 0.0};
  LineFit fit_adjusted{0.0, 0.0};
  std::optional<LineFit> fit_ml;
  Eigen::VectorXd truth;     // slopes only
  Eigen::VectorXd estimate;  // slopes only, unadjusted
};

struct SimSummary {
  SimSetting setting;
  double slope = 0.0;           // mean over successful replicates
  double slope_adjusted = 0.0;
  double intercept = 0.0;
  double intercept_adjusted = 0.0;
  int iterations_min = 0;
  double iterations_mean = 0.0;
  int iterations_max = 0;
  double time_mean = 0.0;
  int converged_count = 0;
  int failed_count = 0;
  std::optional<double> slope_ml;
  std::vector<RepOutcome> reps;
};

struct GridOptions {
  Eigen::Index chunk_size = 1000;
  int workers = 1;
  // Also fit ML (started at the penalized estimate) where mle_exists.
  bool fit_ml = false;
  bool keep_estimates = false;
};

/// Default fitting setup for the experiment: two-pass mJPL from zero,
/// epsilon 1e-3, at most 250 iterations.
FitConfig default_sim_config();

RepOutcome run_replicate(const SimSetting& setting, int rep, const FitConfig& config,
                         const GridOptions& options);
std::vector<SimSummary> run_grid(const std::vector<SimSetting>& settings,
                                 const FitConfig& config, const GridOptions& options = {});

/// Grid file: CSV with header kappa,n,rho2,gamma,shape,reps,seed,mle_exists.
std::vector<SimSetting> read_grid(std::istream& in);
std::vector<SimSetting> read_grid(const std::filesystem::path& path);

// Wall times vary between runs; they are written only with include_timing so
// that summaries of a fixed grid are reproducible byte for byte.
void write_summary_csv(const std::vector<SimSummary>& summaries, std::ostream& out,
                       bool include_timing = false);
void write_summary_json(const std::vector<SimSummary>& summaries, std::ostream& out,
                        bool include_timing = false);
/// Long-format estimates: setting,rep,index,truth,estimate,adjusted.
void write_estimates_csv(const std::vector<SimSummary>& summaries, std::ostream& out);

}  // namespace chunkglm

#endif  // CHUNKGLM_HIGHDIM_SIM_HPP
