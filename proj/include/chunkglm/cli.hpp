#ifndef CHUNKGLM_CLI_HPP
#define CHUNKGLM_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "chunkglm/fitter.hpp"

namespace chunkglm {

struct FitReport {
  std::vector<std::string> names;
  FamilyLink family_link{Family::binomial, Link::logit};
  FitConfig config;
  FitResult result;
};

nlohmann::json to_json(const FitReport& report);
void write_fit_csv(const FitReport& report, std::ostream& out);
// Estimate with its standard error in parentheses underneath.
void write_fit_text(const FitReport& report, std::ostream& out);

/// Entry point of the `chunkglm` executable; `args` excludes the program
/// name. Exit codes: 0 success, 1 error, 2 fit did not converge.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace chunkglm

#endif  // CHUNKGLM_CLI_HPP
