#include "chunkglm/highdim_sim.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "chunkglm/errors.hpp"

namespace chunkglm {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\"");
  const auto last = s.find_last_not_of(" \t\r\"");
  if (first == std::string::npos) return {};
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <typename T>
T parse_field(const std::string& text, std::size_t record, const char* name) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw ConfigError("grid record " + std::to_string(record) + ": bad value '" + text +
                      "' for " + name);
  }
  return value;
}

bool parse_flag(std::string text, std::size_t record) {
  std::transform(text.begin(), text.end(), text.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (text == "1" || text == "true" || text == "yes") return true;
  if (text == "0" || text == "false" || text == "no") return false;
  throw ConfigError("grid record " + std::to_string(record) + ": bad mle_exists '" + text + "'");
}

}  // namespace

BetaShape parse_beta_shape(std::string_view name) {
  if (name == "equispaced") return BetaShape::equispaced;
  if (name == "sparse") return BetaShape::sparse;
  throw ConfigError("unknown beta shape '" + std::string(name) + "'");
}

std::string to_string(BetaShape shape) {
  return shape == BetaShape::equispaced ? "equispaced" : "sparse";
}

Eigen::Index SimSetting::p() const {
  // n kappa is computed in floating point; a hair of slack keeps exact
  // products such as 2000 * 0.15 from rounding up.
  return static_cast<Eigen::Index>(std::ceil(static_cast<double>(n) * kappa - 1e-9));
}

double SimSetting::rho() const { return std::sqrt(rho2); }

double SimSetting::gamma0() const { return gamma * std::sqrt(1.0 - rho2); }

void SimSetting::validate() const {
  if (!(kappa > 0.0 && kappa < 1.0)) throw ConfigError("kappa must lie in (0, 1)");
  if (n < 2) throw ConfigError("n must be at least 2");
  if (!(rho2 >= 0.0 && rho2 < 1.0)) throw ConfigError("rho2 must lie in [0, 1)");
  if (!(gamma > 0.0)) throw ConfigError("gamma must be positive");
  if (reps < 1) throw ConfigError("reps must be at least 1");
  if (p() < 1) throw ConfigError("setting has no covariates");
}

Eigen::VectorXd beta_star(BetaShape shape, Eigen::Index p) {
  if (shape == BetaShape::equispaced) return Eigen::VectorXd::LinSpaced(p, -10.0, 10.0);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
  const auto k = static_cast<Eigen::Index>(std::lround(0.2 * static_cast<double>(p)));
  b.head(k).setConstant(-10.0);
  b.segment(k, k).setConstant(10.0);
  return b;
}

Replicate generate(const SimSetting& setting, int rep_index) {
  setting.validate();
  const Eigen::Index n = setting.n;
  const Eigen::Index p = setting.p();
  std::seed_seq seq{static_cast<std::uint32_t>(setting.seed),
                    static_cast<std::uint32_t>(setting.seed >> 32),
                    static_cast<std::uint32_t>(rep_index), 0x5eedu};
  std::mt19937_64 engine(seq);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform;

  Replicate rep;
  rep.alpha = setting.alpha();
  const Eigen::VectorXd star = beta_star(setting.shape, p);
  const double norm = star.norm();
  if (!(norm > 0.0)) throw ConfigError("beta shape is identically zero for p = " + std::to_string(p));
  rep.beta = setting.gamma0() * star / norm;

  rep.x.resize(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) rep.x(i, j) = normal(engine);
  }
  const Eigen::VectorXd eta = (rep.x * rep.beta).array() + rep.alpha;
  rep.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double prob = 1.0 / (1.0 + std::exp(-eta(i)));
    rep.y(i) = uniform(engine) < prob ? 1.0 : 0.0;
  }
  return rep;
}

double rescale_factor(double kappa, double gamma, double rho, bool mle_exists) {
  if (mle_exists) return 1.0;
  return kappa * gamma / std::sqrt(1.0 - rho * rho);
}

Eigen::VectorXd rescale_estimate(const Eigen::VectorXd& beta_tilde, double kappa, double gamma,
                                 double rho, bool mle_exists) {
  return rescale_factor(kappa, gamma, rho, mle_exists) * beta_tilde;
}

LineFit recovery_fit(const Eigen::VectorXd& estimates, const Eigen::VectorXd& truth) {
  if (estimates.size() != truth.size()) throw ShapeError("estimates and truth differ in length");
  if (truth.size() < 2) throw DegenerateRegressor("need at least two points for a slope");
  const double tbar = truth.mean();
  const double ebar = estimates.mean();
  const Eigen::ArrayXd dt = truth.array() - tbar;
  const double sxx = dt.square().sum();
  if (!(sxx > 0.0)) throw DegenerateRegressor("truth is constant");
  const double slope = (dt * (estimates.array() - ebar)).sum() / sxx;
  return {slope, ebar - slope * tbar};
}

FitConfig default_sim_config() {
  FitConfig config;
  config.estimator = Estimator::mjpl;
  config.variant = Variant::two_pass;
  config.epsilon = 1e-3;
  config.max_iter = 250;
  return config;
}

RepOutcome run_replicate(const SimSetting& setting, int rep, const FitConfig& config,
                         const GridOptions& options) {
  RepOutcome outcome;
  outcome.rep = rep;
  try {
    Replicate data = generate(setting, rep);
    const Eigen::Index n = setting.n;
    const Eigen::Index p = data.x.cols();
    Eigen::MatrixXd design(n, p + 1);
    design.col(0).setOnes();
    design.rightCols(p) = data.x;
    data.x.resize(0, 0);
    MemoryChunkSource source(std::move(design), data.y, Eigen::VectorXd::Ones(n),
                             options.chunk_size);
    const FamilyLink fl(Family::binomial, Link::logit);

    const auto start = std::chrono::steady_clock::now();
    const FitResult result = fit(config, source, fl);
    outcome.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    outcome.converged = result.converged;
    outcome.iterations = result.iterations;

    const Eigen::VectorXd slopes = result.beta.tail(p);
    outcome.fit = recovery_fit(slopes, data.beta);
    outcome.fit_adjusted = recovery_fit(
        rescale_estimate(slopes, setting.kappa, setting.gamma, setting.rho(), setting.mle_exists),
        data.beta);
    if (options.fit_ml && setting.mle_exists) {
      FitConfig ml = config;
      ml.estimator = Estimator::ml;
      ml.beta_start = result.beta;
      ml.score_diagnostic = false;
      const FitResult ml_result = fit(ml, source, fl);
      outcome.fit_ml = recovery_fit(ml_result.beta.tail(p), data.beta);
    }
    if (options.keep_estimates) {
      outcome.truth = data.beta;
      outcome.estimate = slopes;
    }
    outcome.ok = true;
  } catch (const std::exception& e) {
    outcome.ok = false;
    outcome.error = e.what();
  }
  return outcome;
}

std::vector<SimSummary> run_grid(const std::vector<SimSetting>& settings,
                                 const FitConfig& config, const GridOptions& options) {
  struct Task {
    std::size_t setting;
    int rep;
  };
  std::vector<Task> tasks;
  std::vector<SimSummary> summaries(settings.size());
  for (std::size_t s = 0; s < settings.size(); ++s) {
    settings[s].validate();
    summaries[s].setting = settings[s];
    summaries[s].reps.resize(static_cast<std::size_t>(settings[s].reps));
    for (int r = 0; r < settings[s].reps; ++r) tasks.push_back({s, r});
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < tasks.size(); t = next++) {
      const Task task = tasks[t];
      summaries[task.setting].reps[static_cast<std::size_t>(task.rep)] =
          run_replicate(settings[task.setting], task.rep, config, options);
    }
  };
  const int workers = std::max(1, options.workers);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  for (SimSummary& summary : summaries) {
    int ok = 0;
    double ml_sum = 0.0;
    int ml_count = 0;
    summary.iterations_min = std::numeric_limits<int>::max();
    for (const RepOutcome& rep : summary.reps) {
      if (!rep.ok) {
        ++summary.failed_count;
        continue;
      }
      ++ok;
      summary.slope += rep.fit.slope;
      summary.slope_adjusted += rep.fit_adjusted.slope;
      summary.intercept += rep.fit.intercept;
      summary.intercept_adjusted += rep.fit_adjusted.intercept;
      summary.iterations_min = std::min(summary.iterations_min, rep.iterations);
      summary.iterations_max = std::max(summary.iterations_max, rep.iterations);
      summary.iterations_mean += rep.iterations;
      summary.time_mean += rep.seconds;
      if (rep.converged) ++summary.converged_count;
      if (rep.fit_ml) {
        ml_sum += rep.fit_ml->slope;
        ++ml_count;
      }
    }
    if (ok == 0) {
      summary.iterations_min = 0;
      continue;
    }
    summary.slope /= ok;
    summary.slope_adjusted /= ok;
    summary.intercept /= ok;
    summary.intercept_adjusted /= ok;
    summary.iterations_mean /= ok;
    summary.time_mean /= ok;
    if (ml_count > 0) summary.slope_ml = ml_sum / ml_count;
  }
  return summaries;
}

std::vector<SimSetting> read_grid(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("grid file is empty");
  const std::vector<std::string> header = split(line);
  auto column = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ConfigError("grid header lacks column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_kappa = column("kappa"), c_n = column("n"), c_rho2 = column("rho2"),
                    c_gamma = column("gamma"), c_shape = column("shape"),
                    c_reps = column("reps"), c_seed = column("seed"),
                    c_exists = column("mle_exists");

  std::vector<SimSetting> settings;
  std::size_t record = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty() || trim(line).front() == '#') continue;
    ++record;
    const std::vector<std::string> f = split(line);
    if (f.size() != header.size()) {
      throw ConfigError("grid record " + std::to_string(record) + ": expected " +
                        std::to_string(header.size()) + " fields, found " +
                        std::to_string(f.size()));
    }
    SimSetting s;
    s.kappa = parse_field<double>(f[c_kappa], record, "kappa");
    s.n = parse_field<Eigen::Index>(f[c_n], record, "n");
    s.rho2 = parse_field<double>(f[c_rho2], record, "rho2");
    s.gamma = parse_field<double>(f[c_gamma], record, "gamma");
    try {
      s.shape = parse_beta_shape(f[c_shape]);
    } catch (const ConfigError&) {
      throw ConfigError("grid record " + std::to_string(record) + ": unknown shape '" +
                        f[c_shape] + "'");
    }
    s.reps = parse_field<int>(f[c_reps], record, "reps");
    s.seed = parse_field<std::uint64_t>(f[c_seed], record, "seed");
    s.mle_exists = parse_flag(f[c_exists], record);
    try {
      s.validate();
    } catch (const ConfigError& e) {
      throw ConfigError("grid record " + std::to_string(record) + ": " + e.what());
    }
    settings.push_back(s);
  }
  if (settings.empty()) throw ConfigError("grid file has no settings");
  return settings;
}

std::vector<SimSetting> read_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ReadError("cannot open grid file '" + path.string() + "'");
  return read_grid(in);
}

void write_summary_csv(const std::vector<SimSummary>& summaries, std::ostream& out,
                       bool include_timing) {
  out << "kappa,n,p,rho2,gamma,shape,reps,seed,mle_exists,slope,slope_adjusted,intercept,"
         "intercept_adjusted,iterations_min,iterations_mean,iterations_max,converged,failed,"
         "slope_ml";
  out << (include_timing ? ",time_mean\n" : "\n");
  out.precision(10);
  for (const SimSummary& s : summaries) {
    const SimSetting& g = s.setting;
    out << g.kappa << ',' << g.n << ',' << g.p() << ',' << g.rho2 << ',' << g.gamma << ','
        << to_string(g.shape) << ',' << g.reps << ',' << g.seed << ','
        << (g.mle_exists ? "true" : "false") << ',' << s.slope << ',' << s.slope_adjusted << ','
        << s.intercept << ',' << s.intercept_adjusted << ',' << s.iterations_min << ','
        << s.iterations_mean << ',' << s.iterations_max << ',' << s.converged_count << ','
        << s.failed_count << ',';
    if (s.slope_ml) out << *s.slope_ml;
    if (include_timing) out << ',' << s.time_mean;
    out << '\n';
  }
}

void write_summary_json(const std::vector<SimSummary>& summaries, std::ostream& out,
                        bool include_timing) {
  nlohmann::json doc = nlohmann::json::array();
  for (const SimSummary& s : summaries) {
    const SimSetting& g = s.setting;
    nlohmann::json reps = nlohmann::json::array();
    for (const RepOutcome& r : s.reps) {
      nlohmann::json rep = {{"rep", r.rep}, {"ok", r.ok}};
      if (r.ok) {
        rep["converged"] = r.converged;
        rep["iterations"] = r.iterations;
        if (include_timing) rep["seconds"] = r.seconds;
        rep["slope"] = r.fit.slope;
        rep["intercept"] = r.fit.intercept;
        rep["slope_adjusted"] = r.fit_adjusted.slope;
        rep["intercept_adjusted"] = r.fit_adjusted.intercept;
        if (r.fit_ml) rep["slope_ml"] = r.fit_ml->slope;
      } else {
        rep["error"] = r.error;
      }
      reps.push_back(rep);
    }
    nlohmann::json entry = {
        {"setting",
         {{"kappa", g.kappa},
          {"n", g.n},
          {"p", g.p()},
          {"rho2", g.rho2},
          {"gamma", g.gamma},
          {"shape", to_string(g.shape)},
          {"reps", g.reps},
          {"seed", g.seed},
          {"mle_exists", g.mle_exists}}},
        {"slope", s.slope},
        {"slope_adjusted", s.slope_adjusted},
        {"intercept", s.intercept},
        {"intercept_adjusted", s.intercept_adjusted},
        {"iterations", {{"min", s.iterations_min}, {"mean", s.iterations_mean}, {"max", s.iterations_max}}},
        {"converged", s.converged_count},
        {"failed", s.failed_count},
        {"replicates", reps}};
    if (s.slope_ml) entry["slope_ml"] = *s.slope_ml;
    if (include_timing) entry["time_mean"] = s.time_mean;
    doc.push_back(entry);
  }
  out << doc.dump(2) << '\n';
}

void write_estimates_csv(const std::vector<SimSummary>& summaries, std::ostream& out) {
  out << "setting,rep,index,truth,estimate,adjusted\n";
  out.precision(17);
  for (std::size_t s = 0; s < summaries.size(); ++s) {
    const SimSetting& g = summaries[s].setting;
    const double factor = rescale_factor(g.kappa, g.gamma, g.rho(), g.mle_exists);
    for (const RepOutcome& r : summaries[s].reps) {
      for (Eigen::Index j = 0; j < r.estimate.size(); ++j) {
        out << s << ',' << r.rep << ',' << j << ',' << r.truth(j) << ',' << r.estimate(j) << ','
            << factor * r.estimate(j) << '\n';
      }
    }
  }
}

}  // namespace chunkglm
