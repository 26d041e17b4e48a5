#include "chunkglm/cli.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <ostream>

#include <CLI11.hpp>

#include "chunkglm/errors.hpp"
#include "chunkglm/highdim_sim.hpp"

namespace chunkglm {

namespace {

struct FitOptions {
  std::string data;
  std::string response;
  std::string weights;
  std::vector<std::string> covariates;
  bool intercept = true;
  std::string family = "binomial";
  std::string link;
  std::string estimator = "mjpl";
  double jeffreys_power = 1.0;
  std::string variant = "two-pass";
  Eigen::Index chunk_size = kDefaultChunkSize;
  double epsilon = 1e-3;
  int max_iter = 250;
  std::string dispersion;
  std::string output = "json";
  bool warm_start = false;
};

struct SimulateOptions {
  std::string grid;
  std::string summary_csv;
  std::string summary_json;
  std::string estimates;
  int jobs = 1;
  Eigen::Index chunk_size = 1000;
  double epsilon = 1e-3;
  int max_iter = 250;
  std::string variant = "two-pass";
  bool fit_ml = false;
  bool timing = false;
};

const std::map<std::string, Estimator> kEstimators{
    {"ml", Estimator::ml}, {"mbr", Estimator::mbr}, {"mjpl", Estimator::mjpl}};
const std::map<std::string, Variant> kVariants{{"one-pass", Variant::one_pass},
                                               {"two-pass", Variant::two_pass}};
const std::map<std::string, DispersionRule> kDispersion{
    {"fixed", DispersionRule::fixed},
    {"moment", DispersionRule::moment},
    {"ml", DispersionRule::ml_scoring},
    {"mbr", DispersionRule::mbr_scoring}};

template <typename Map>
std::vector<std::string> keys(const Map& map) {
  std::vector<std::string> out;
  for (const auto& [k, v] : map) out.push_back(k);
  return out;
}

// Flag-level validation, done before any data is read.
FitReport prepare_fit(const FitOptions& o) {
  FitReport report;
  Family family{};
  try {
    family = parse_family(o.family);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("--family: ") + e.what());
  }
  Link link = default_link(family);
  if (!o.link.empty()) {
    try {
      link = parse_link(o.link);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("--link: ") + e.what());
    }
  }
  if (!admissible(family, link)) {
    throw ConfigError("--link: link '" + to_string(link) + "' is not available for family '" +
                      to_string(family) + "'");
  }
  if (!(o.jeffreys_power > 0.0)) throw ConfigError("--jeffreys-power: must be positive");
  report.family_link = FamilyLink(family, link, o.jeffreys_power);

  FitConfig& config = report.config;
  config.estimator = kEstimators.at(o.estimator);
  config.variant = kVariants.at(o.variant);
  config.epsilon = o.epsilon;
  config.max_iter = o.max_iter;
  if (!o.dispersion.empty()) config.dispersion = kDispersion.at(o.dispersion);
  if (o.warm_start) config.warm_start = WarmStart{};
  if (report.family_link.dispersion_fixed() &&
      config.resolved_dispersion(report.family_link) != DispersionRule::fixed) {
    throw ConfigError("--dispersion: family '" + o.family + "' has dispersion fixed at 1");
  }
  if (!(config.epsilon > 0.0)) throw ConfigError("--epsilon: must be positive");
  if (config.max_iter < 1) throw ConfigError("--max-iter: must be at least 1");
  if (o.chunk_size < 1) throw ConfigError("--chunk-size: must be at least 1");
  if (config.warm_start && family != Family::binomial) {
    throw ConfigError("--warm-start: only available for the binomial family");
  }
  return report;
}

int run_fit(const FitOptions& o, std::ostream& out) {
  FitReport report = prepare_fit(o);
  ChunkSchema schema;
  schema.response = o.response;
  if (!o.weights.empty()) schema.weights = o.weights;
  schema.covariates = o.covariates;
  schema.intercept = o.intercept;
  report.names = schema.coefficient_names();

  std::unique_ptr<CsvChunkSource> source;
  if (o.data == "-") {
    source = std::make_unique<CsvChunkSource>(std::cin, schema, o.chunk_size);
  } else {
    source = std::make_unique<CsvChunkSource>(o.data, schema, o.chunk_size);
  }
  report.config.validate(report.family_link, source->cols());
  report.result = fit(report.config, *source, report.family_link);

  if (o.output == "json") {
    out << to_json(report).dump(2) << '\n';
  } else if (o.output == "csv") {
    write_fit_csv(report, out);
  } else {
    write_fit_text(report, out);
  }
  return report.result.converged ? 0 : 2;
}

int run_simulate(const SimulateOptions& o, std::ostream& out) {
  const std::vector<SimSetting> settings = read_grid(std::filesystem::path(o.grid));
  FitConfig config = default_sim_config();
  config.epsilon = o.epsilon;
  config.max_iter = o.max_iter;
  config.variant = kVariants.at(o.variant);
  GridOptions options;
  options.chunk_size = o.chunk_size;
  options.workers = o.jobs;
  options.fit_ml = o.fit_ml;
  options.keep_estimates = !o.estimates.empty();
  const std::vector<SimSummary> summaries = run_grid(settings, config, options);

  auto write_to = [](const std::string& path, auto&& writer) {
    std::ofstream file(path);
    if (!file) throw ReadError("cannot write '" + path + "'");
    writer(file);
  };
  if (!o.summary_csv.empty()) {
    write_to(o.summary_csv, [&](std::ostream& f) { write_summary_csv(summaries, f, o.timing); });
  }
  if (!o.summary_json.empty()) {
    write_to(o.summary_json, [&](std::ostream& f) { write_summary_json(summaries, f, o.timing); });
  }
  if (!o.estimates.empty()) {
    write_to(o.estimates, [&](std::ostream& f) { write_estimates_csv(summaries, f); });
  }
  if (o.summary_csv.empty() && o.summary_json.empty()) write_summary_csv(summaries, out, o.timing);
  return 0;
}

}  // namespace

nlohmann::json to_json(const FitReport& report) {
  const FitResult& r = report.result;
  auto vec = [](const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  nlohmann::json iterations = nlohmann::json::array();
  for (const IterationRecord& it : r.per_iteration) {
    nlohmann::json rec = {{"step", it.step}, {"phi", it.phi}, {"seconds", it.seconds}};
    rec["leverage_trace"] =
        std::isnan(it.leverage_trace) ? nlohmann::json(nullptr) : nlohmann::json(it.leverage_trace);
    iterations.push_back(rec);
  }
  return {{"names", report.names},
          {"beta", vec(r.beta)},
          {"se", vec(r.se)},
          {"phi", r.phi},
          {"iterations", r.iterations},
          {"converged", r.converged},
          {"reason", r.reason},
          {"adjusted_score_norm", r.adjusted_score_norm},
          {"n", r.n},
          {"family", to_string(report.family_link.family())},
          {"link", to_string(report.family_link.link())},
          {"estimator", to_string(report.config.estimator)},
          {"jeffreys_power", report.family_link.jeffreys_power()},
          {"variant", to_string(report.config.variant)},
          {"dispersion", to_string(report.config.resolved_dispersion(report.family_link))},
          {"epsilon", report.config.epsilon},
          {"per_iteration", iterations}};
}

void write_fit_csv(const FitReport& report, std::ostream& out) {
  out << "term,estimate,se\n";
  out << std::setprecision(17);
  for (Eigen::Index j = 0; j < report.result.beta.size(); ++j) {
    out << report.names[static_cast<std::size_t>(j)] << ',' << report.result.beta(j) << ','
        << report.result.se(j) << '\n';
  }
}

void write_fit_text(const FitReport& report, std::ostream& out) {
  const FitResult& r = report.result;
  std::size_t width = 12;
  for (const auto& name : report.names) width = std::max(width, name.size() + 2);
  out << to_string(report.config.estimator) << " fit (" << to_string(report.config.variant)
      << "), " << to_string(report.family_link.family()) << " with "
      << to_string(report.family_link.link()) << " link\n\n";
  out << std::fixed << std::setprecision(2);
  for (Eigen::Index j = 0; j < r.beta.size(); ++j) {
    out << std::left << std::setw(static_cast<int>(width))
        << report.names[static_cast<std::size_t>(j)] << std::right << std::setw(10) << r.beta(j)
        << '\n';
    std::ostringstream se;
    se << std::fixed << std::setprecision(2) << '(' << r.se(j) << ')';
    out << std::setw(static_cast<int>(width)) << "" << std::setw(10) << se.str() << '\n';
  }
  out << std::defaultfloat << std::setprecision(6) << "\nphi " << r.phi << ", n " << r.n
      << ", iterations " << r.iterations << ", "
      << (r.converged ? "converged" : "not converged: " + r.reason) << '\n';
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bounded-memory GLM fitting with bias-reducing and Jeffreys-penalized IWLS",
               "chunkglm"};
  app.require_subcommand(1);

  FitOptions fo;
  CLI::App* fit_cmd = app.add_subcommand("fit", "Fit a GLM to a CSV file, one chunk at a time");
  fit_cmd->add_option("--data", fo.data, "CSV file with a header row ('-' for stdin)")->required();
  fit_cmd->add_option("--response", fo.response, "Response column")->required();
  fit_cmd->add_option("--weights", fo.weights, "Prior weight / binomial trials column");
  fit_cmd->add_option("--covariates", fo.covariates, "Covariate columns")->delimiter(',');
  fit_cmd->add_flag("--intercept,!--no-intercept", fo.intercept, "Include an intercept");
  fit_cmd->add_option("--family", fo.family)
      ->check(CLI::IsMember({"binomial", "poisson", "gaussian", "gamma"}))
      ->capture_default_str();
  fit_cmd->add_option("--link", fo.link, "Link (default: canonical-ish per family)")
      ->check(CLI::IsMember({"logit", "probit", "cloglog", "identity", "log", "inverse"}));
  fit_cmd->add_option("--estimator", fo.estimator)
      ->check(CLI::IsMember(keys(kEstimators)))
      ->capture_default_str();
  fit_cmd->add_option("--jeffreys-power", fo.jeffreys_power)->capture_default_str();
  fit_cmd->add_option("--variant", fo.variant)
      ->check(CLI::IsMember(keys(kVariants)))
      ->capture_default_str();
  fit_cmd->add_option("--chunk-size", fo.chunk_size)->capture_default_str();
  fit_cmd->add_option("--epsilon", fo.epsilon)->capture_default_str();
  fit_cmd->add_option("--max-iter", fo.max_iter)->capture_default_str();
  fit_cmd->add_option("--dispersion", fo.dispersion, "fixed, moment, ml or mbr")
      ->check(CLI::IsMember(keys(kDispersion)));
  fit_cmd->add_option("--output", fo.output)
      ->check(CLI::IsMember({"json", "csv", "text"}))
      ->capture_default_str();
  fit_cmd->add_flag("--warm-start", fo.warm_start,
                    "Start from two ML iterations on shrunken binary responses");

  SimulateOptions so;
  CLI::App* sim_cmd =
      app.add_subcommand("simulate", "Run the high-dimensional logistic regression grid");
  sim_cmd->add_option("--grid", so.grid, "Grid CSV file")->required();
  sim_cmd->add_option("--summary-csv", so.summary_csv);
  sim_cmd->add_option("--summary-json", so.summary_json);
  sim_cmd->add_option("--estimates", so.estimates, "Per-replicate estimate dump (CSV)");
  sim_cmd->add_option("--jobs", so.jobs, "Worker threads")->capture_default_str();
  sim_cmd->add_option("--chunk-size", so.chunk_size)->capture_default_str();
  sim_cmd->add_option("--epsilon", so.epsilon)->capture_default_str();
  sim_cmd->add_option("--max-iter", so.max_iter)->capture_default_str();
  sim_cmd->add_option("--variant", so.variant)
      ->check(CLI::IsMember(keys(kVariants)))
      ->capture_default_str();
  sim_cmd->add_flag("--fit-ml", so.fit_ml, "Also fit ML where it exists");
  sim_cmd->add_flag("--timing", so.timing, "Include wall times in the summaries");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (fit_cmd->parsed()) return run_fit(fo, out);
    return run_simulate(so, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace chunkglm
