#include "chunkglm/fitter.hpp"

#include <chrono>
#include <algorithm>
#include <cmath>
#include <utility>

#include "chunkglm/errors.hpp"

namespace chunkglm {

namespace {

double response(double y, const std::optional<double>& shift) {
  return shift ? (1.0 - 2.0 * *shift) * y + *shift : y;
}

// Working quantities of one chunk at a given beta.
struct ChunkWork {
  Eigen::VectorXd eta;
  Eigen::VectorXd w;
  Eigen::VectorXd z;
  Eigen::VectorXd kappa;
};

ChunkWork evaluate_chunk(const Chunk& chunk, const Eigen::VectorXd& beta, const FamilyLink& fl,
                         double b1, double b2, const std::optional<double>& shift,
                         double phi, bool scoring_sums, PassStats* stats) {
  const Eigen::Index rows = chunk.rows();
  ChunkWork work;
  work.eta.noalias() = chunk.x * beta;
  work.w.resize(rows);
  work.z.resize(rows);
  work.kappa.resize(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double y = response(chunk.y(i), shift);
    const double m = chunk.m(i);
    const PointQuantities pq = point_quantities(work.eta(i), y, m, fl);
    work.w(i) = pq.w;
    work.z(i) = pq.z;
    work.kappa(i) = pq.w > 0.0 ? b1 * pq.xi + b2 * pq.lambda : 0.0;
    if (stats != nullptr) {
      const double r = pq.z - work.eta(i);
      if (pq.w > 0.0) stats->moment_sum += pq.w * r * r;
      if (scoring_sums) {
        const DeviancePoint dp = deviance_point(work.eta(i), y, m, phi, fl);
        const ADerivatives a = a_derivatives(m, phi, fl);
        stats->deviance_gap += dp.q - dp.rho;
        stats->m2_a2 += m * m * a.second;
        stats->m3_a3 += m * m * m * a.third;
      }
    }
  }
  if (stats != nullptr) stats->n += rows;
  return work;
}

// One pass absorbing every chunk at beta, with z optionally augmented.
template <typename Augment>
Accumulator absorb_pass(const IterationState& state, ChunkSource& source, const FamilyLink& fl,
                        double b1, double b2, PassStats& stats, Augment&& augment) {
  source.reset();
  Accumulator acc(source.cols());
  if (state.beta_current.size() != source.cols()) {
    throw ShapeError("beta has " + std::to_string(state.beta_current.size()) +
                     " entries, model has " + std::to_string(source.cols()) + " columns");
  }
  while (auto chunk = source.next_chunk()) {
    ChunkWork work = evaluate_chunk(*chunk, state.beta_current, fl, b1, b2,
                                    state.response_shift, state.phi_current,
                                    state.scoring_sums, &stats);
    augment(*chunk, work);
    acc.absorb_chunk(chunk->x, work.z, work.w);
  }
  return acc;
}

// Second projection: (XᵀWX)⁻¹ Xᵀ W (phi H kappa) with H from `acc`.
Eigen::VectorXd adjustment_projection(const Accumulator& acc, const Eigen::VectorXd& beta,
                                      double phi, double b1, double b2, ChunkSource& source,
                                      const FamilyLink& fl, double& trace) {
  source.reset();
  Eigen::VectorXd s = Eigen::VectorXd::Zero(acc.cols());
  trace = 0.0;
  while (auto chunk = source.next_chunk()) {
    const ChunkWork work = evaluate_chunk(*chunk, beta, fl, b1, b2, std::nullopt, phi, false,
                                          nullptr);
    const Eigen::VectorXd h = acc.leverages(chunk->x, work.w);
    trace += h.sum();
    const Eigen::VectorXd coef = phi * work.w.cwiseProduct(h).cwiseProduct(work.kappa);
    s.noalias() += chunk->x.transpose() * coef;
  }
  return acc.solve_information(s);
}

PassStats stats_pass(const Eigen::VectorXd& beta, double phi, bool scoring, ChunkSource& source,
                     const FamilyLink& fl) {
  source.reset();
  PassStats stats;
  while (auto chunk = source.next_chunk()) {
    evaluate_chunk(*chunk, beta, fl, 0.0, 0.0, std::nullopt, phi, scoring, &stats);
  }
  return stats;
}

Eigen::VectorXd score_with_factor(const Accumulator& acc, const Eigen::VectorXd& beta,
                                  double phi, double b1, double b2, ChunkSource& source,
                                  const FamilyLink& fl) {
  const bool adjusted = b1 != 0.0 || b2 != 0.0;
  source.reset();
  Eigen::VectorXd score = Eigen::VectorXd::Zero(beta.size());
  while (auto chunk = source.next_chunk()) {
    const ChunkWork work = evaluate_chunk(*chunk, beta, fl, b1, b2, std::nullopt, phi, false,
                                          nullptr);
    Eigen::VectorXd r = work.z - work.eta;
    if (adjusted) r += phi * acc.leverages(chunk->x, work.w).cwiseProduct(work.kappa);
    for (Eigen::Index i = 0; i < r.size(); ++i) {
      if (work.w(i) == 0.0) r(i) = 0.0;
    }
    score.noalias() += chunk->x.transpose() * work.w.cwiseProduct(r);
  }
  return score / phi;
}

// IWLS step taken from mu = y for the inverse link, where beta = 0 is not a
// valid mean: z = 1/y and w = m y^2.
Eigen::VectorXd start_from_response(ChunkSource& source) {
  source.reset();
  Accumulator acc(source.cols());
  while (auto chunk = source.next_chunk()) {
    const Eigen::VectorXd mu = chunk->y.cwiseMax(kMeanEpsilon);
    acc.absorb_chunk(chunk->x, mu.cwiseInverse(), chunk->m.cwiseProduct(mu.cwiseAbs2()));
  }
  return acc.solve_coefficients();
}

bool is_scoring(DispersionRule rule) {
  return rule == DispersionRule::ml_scoring || rule == DispersionRule::mbr_scoring;
}

}  // namespace

DispersionRule FitConfig::resolved_dispersion(const FamilyLink& fl) const {
  if (dispersion) return *dispersion;
  return fl.dispersion_fixed() ? DispersionRule::fixed : DispersionRule::moment;
}

void FitConfig::validate(const FamilyLink& fl, Eigen::Index p) const {
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (max_iter < 1) throw ConfigError("max_iter must be at least 1");
  if (fl.dispersion_fixed() && resolved_dispersion(fl) != DispersionRule::fixed) {
    throw ConfigError("family '" + to_string(fl.family()) +
                      "' requires the fixed dispersion rule");
  }
  if (beta_start && beta_start->size() != p) {
    throw ConfigError("beta_start has " + std::to_string(beta_start->size()) +
                      " entries, model has " + std::to_string(p));
  }
  if (warm_start) {
    if (fl.family() != Family::binomial) {
      throw ConfigError("warm start adjusts binary responses and needs the binomial family");
    }
    if (!(warm_start->delta > 0.0 && warm_start->delta < 0.5) || warm_start->iterations < 0) {
      throw ConfigError("warm start needs 0 < delta < 0.5 and a nonnegative iteration count");
    }
  }
}

std::string to_string(Estimator estimator) {
  switch (estimator) {
    case Estimator::ml:
      return "ml";
    case Estimator::mbr:
      return "mbr";
    case Estimator::mjpl:
      return "mjpl";
  }
  return "?";
}

std::string to_string(DispersionRule rule) {
  switch (rule) {
    case DispersionRule::fixed:
      return "fixed";
    case DispersionRule::moment:
      return "moment";
    case DispersionRule::ml_scoring:
      return "ml";
    case DispersionRule::mbr_scoring:
      return "mbr";
  }
  return "?";
}

std::string to_string(Variant variant) {
  return variant == Variant::one_pass ? "one-pass" : "two-pass";
}

IterationResult ml_iteration(const IterationState& state, ChunkSource& source,
                             const FamilyLink& fl) {
  IterationResult result;
  result.phi_used = state.phi_current;
  result.accumulator = absorb_pass(state, source, fl, 0.0, 0.0, result.stats,
                                   [](const Chunk&, ChunkWork&) {});
  result.beta_next = result.accumulator.solve_coefficients();
  return result;
}

IterationResult adjusted_iteration_two_pass(const IterationState& state, ChunkSource& source,
                                            const FamilyLink& fl, double b1, double b2) {
  if (!source.rewindable()) throw NotRewindable("the two-pass update needs a rewindable source");
  IterationResult result = ml_iteration(state, source, fl);
  const double phi = state.moment_phi ? phi_from_moment(result.stats, source.cols())
                                      : state.phi_current;
  result.phi_used = phi;
  double trace = 0.0;
  result.beta_next += adjustment_projection(result.accumulator, state.beta_current, phi, b1, b2,
                                            source, fl, trace);
  result.stats.leverage_trace = trace;
  return result;
}

IterationResult adjusted_iteration_one_pass(const IterationState& state, ChunkSource& source,
                                            const FamilyLink& fl, double b1, double b2) {
  const double phi = state.phi_current;
  const bool lagged = state.rbar_previous.has_value();
  if (lagged && state.beta_previous.size() != state.beta_current.size()) {
    throw ShapeError("previous beta missing or of the wrong length");
  }
  IterationResult result;
  result.phi_used = phi;
  result.accumulator = absorb_pass(
      state, source, fl, b1, b2, result.stats, [&](const Chunk& chunk, ChunkWork& work) {
        Eigen::VectorXd h;
        if (lagged) {
          const ChunkWork previous = evaluate_chunk(chunk, state.beta_previous, fl, 0.0, 0.0,
                                                    std::nullopt, phi, false, nullptr);
          h = state.rbar_previous->leverages(chunk.x, previous.w);
        } else {
          h = Eigen::VectorXd::Constant(chunk.rows(), state.h_default);
        }
        work.z += phi * h.cwiseProduct(work.kappa);
      });
  result.beta_next = result.accumulator.solve_coefficients();
  return result;
}

double phi_from_moment(const PassStats& stats, Eigen::Index p) {
  if (stats.n <= p) {
    throw DegreesOfFreedomError("moment dispersion needs more rows (" + std::to_string(stats.n) +
                                ") than coefficients (" + std::to_string(p) + ")");
  }
  return stats.moment_sum / static_cast<double>(stats.n - p);
}

double phi_from_scoring(const PassStats& stats, double phi, double c1, Eigen::Index p) {
  const double info = stats.m2_a2;
  const double adjustment =
      stats.m3_a3 / (info * info) + phi * static_cast<double>(p - 2) / info;
  return phi * (1.0 + phi * stats.deviance_gap / info + c1 * phi * adjustment);
}

double update_phi_moment(const Eigen::VectorXd& beta, Eigen::Index p, ChunkSource& source,
                         const FamilyLink& fl) {
  return phi_from_moment(stats_pass(beta, 1.0, false, source, fl), p);
}

double update_phi_scoring(const Eigen::VectorXd& beta_hat, double phi, double c1,
                          Eigen::Index p, ChunkSource& source, const FamilyLink& fl) {
  if (fl.dispersion_fixed()) {
    throw NotApplicable("family '" + to_string(fl.family()) + "' has no free dispersion");
  }
  return phi_from_scoring(stats_pass(beta_hat, phi, true, source, fl), phi, c1, p);
}

Eigen::VectorXd adjusted_score(const Eigen::VectorXd& beta, double phi, double b1, double b2,
                               ChunkSource& source, const FamilyLink& fl) {
  IterationState state;
  state.beta_current = beta;
  state.phi_current = phi;
  const IterationResult at_beta = ml_iteration(state, source, fl);
  return score_with_factor(at_beta.accumulator, beta, phi, b1, b2, source, fl);
}

Eigen::VectorXd standard_errors(const Accumulator& accumulator, double phi) {
  return accumulator.covariance_diagonal(phi).cwiseSqrt();
}

FitResult fit(const FitConfig& config, ChunkSource& source, const FamilyLink& fl) {
  using Clock = std::chrono::steady_clock;
  const Eigen::Index p = source.cols();
  config.validate(fl, p);
  if (!source.rewindable()) throw NotRewindable("fitting needs repeated passes over the data");

  const DispersionRule rule = config.resolved_dispersion(fl);
  const double b1 = config.b1();
  const double b2 = config.b2();
  const bool adjusted = config.estimator != Estimator::ml;
  const bool free_phi = !fl.dispersion_fixed() && rule != DispersionRule::fixed;

  IterationState state;
  if (config.beta_start) {
    state.beta_current = *config.beta_start;
  } else if (fl.link() == Link::inverse) {
    state.beta_current = start_from_response(source);
  } else {
    state.beta_current = Eigen::VectorXd::Zero(p);
  }
  state.scoring_sums = is_scoring(rule);
  state.moment_phi =
      adjusted && config.variant == Variant::two_pass && rule == DispersionRule::moment;

  if (adjusted && config.variant == Variant::one_pass) {
    std::optional<std::int64_t> n = source.known_rows();
    if (!n) {
      source.reset();
      std::int64_t count = 0;
      while (auto chunk = source.next_chunk()) count += chunk->rows();
      n = count;
    }
    if (*n == 0) throw DegreesOfFreedomError("no data rows");
    state.h_default = static_cast<double>(p) / static_cast<double>(*n);
  }

  if (config.warm_start) {
    IterationState warm = state;
    warm.scoring_sums = false;
    warm.response_shift = config.warm_start->delta;
    for (int k = 0; k < config.warm_start->iterations; ++k) {
      warm.beta_current = ml_iteration(warm, source, fl).beta_next;
    }
    state.beta_current = warm.beta_current;
  }

  FitResult result;
  double phi = 1.0;
  for (int iter = 0; iter < config.max_iter; ++iter) {
    const auto start = Clock::now();
    state.phi_current = phi;
    IterationResult step;
    if (!adjusted) {
      step = ml_iteration(state, source, fl);
    } else if (config.variant == Variant::two_pass) {
      step = adjusted_iteration_two_pass(state, source, fl, b1, b2);
    } else {
      step = adjusted_iteration_one_pass(state, source, fl, b1, b2);
    }

    double phi_next = 1.0;
    switch (rule) {
      case DispersionRule::fixed:
        break;
      case DispersionRule::moment:
        phi_next = phi_from_moment(step.stats, p);
        break;
      case DispersionRule::ml_scoring:
      case DispersionRule::mbr_scoring:
        phi_next = phi_from_scoring(step.stats, phi,
                                    rule == DispersionRule::mbr_scoring ? 1.0 : 0.0, p);
        // A scoring step that leaves the parameter space is halved back.
        if (!(phi_next > 0.0) || !std::isfinite(phi_next)) phi_next = 0.5 * phi;
        break;
    }

    const double change = (step.beta_next - state.beta_current).lpNorm<Eigen::Infinity>();
    const double phi_change = std::abs(phi_next - phi);
    result.n = step.stats.n;
    result.per_iteration.push_back(
        {change, phi_next, std::chrono::duration<double>(Clock::now() - start).count(),
         step.stats.leverage_trace});

    state.beta_previous = std::move(state.beta_current);
    state.beta_current = std::move(step.beta_next);
    state.rbar_previous = std::move(step.accumulator);
    phi = phi_next;
    ++result.iterations;

    Eigen::Index worst = 0;
    const double largest = state.beta_current.cwiseAbs().maxCoeff(&worst);
    if (!state.beta_current.allFinite() || largest > config.divergence_limit) {
      if (!state.beta_current.allFinite()) {
        for (Eigen::Index j = 0; j < p; ++j) {
          if (!std::isfinite(state.beta_current(j))) {
            worst = j;
            break;
          }
        }
      }
      throw DivergenceError(static_cast<std::size_t>(worst), state.beta_current(worst));
    }
    if (change < config.epsilon && (!free_phi || phi_change < config.epsilon)) {
      result.converged = true;
      break;
    }
  }
  if (!result.converged) {
    result.reason = "iteration limit of " + std::to_string(config.max_iter) + " reached";
  }

  // Factor, dispersion and standard errors at the returned estimate.
  IterationState final_state;
  final_state.beta_current = state.beta_current;
  final_state.phi_current = phi;
  IterationResult at_estimate = ml_iteration(final_state, source, fl);
  if (rule == DispersionRule::moment) phi = phi_from_moment(at_estimate.stats, p);
  result.beta = state.beta_current;
  result.phi = phi;
  result.n = at_estimate.stats.n;
  result.se = standard_errors(at_estimate.accumulator, phi);
  if (config.score_diagnostic) {
    result.adjusted_score_norm =
        score_with_factor(at_estimate.accumulator, result.beta, phi, b1, b2, source, fl)
            .lpNorm<Eigen::Infinity>();
  }
  result.final_rbar = std::move(at_estimate.accumulator);
  return result;
}

}  // namespace chunkglm
