#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>

namespace dyngame::cli {

enum ExitCode : int {
  kConverged = 0,
  kUsage = 1,
  kNotConverged = 2,
  kSingular = 3,
  kDiverged = 4,
};

struct RunConfig {
  std::string problem = "owner-dog";
  std::string method = "newton";  // newton | ddp | both
  std::optional<double> lambda;   // default: the catalog entry's value
  int max_iters = 100;
  double residual_tol = 1e-8;
  double step_tol = 1e-12;
  std::uint64_t seed = 1;
  std::string out = "out";
  std::map<std::string, double> overrides;
  std::string propagation = "open-loop";  // open-loop | feedback
  int threads = 0;
  // verify / compare only
  int oracle_max_dim = 400;
  std::string inject_fault;  // "" | "ddp-sign"
  bool lockstep = false;
};

/// Parses a flat JSON document into cfg. Unknown keys are rejected.
void load_config_json(const std::string& text, RunConfig& cfg);

/// Checks enumerated fields and ranges; throws dyngame::Error with a message.
void check_config(const RunConfig& cfg);

int cmd_solve(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_verify(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_compare(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_list_problems(std::ostream& out);

/// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dyngame::cli
