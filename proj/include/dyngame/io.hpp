#pragma once

#include <dyngame/solver.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace dyngame::io {

/// Formats a double with 17 significant digits; non-finite values become JSON null.
std::string number(double v);

/// Trajectory as CSV: k, x_0.., u_0..; the terminal row leaves the u columns blank.
void write_trajectory_csv(std::ostream& os, const Trajectory<double>& traj);

/// One JSON object per iteration with keys iter, residual_inf, step_inf, costs, reg_events.
void write_iterations_jsonl(std::ostream& os, const SolveReport<double>& report);

struct SummaryInfo {
  std::string problem;
  std::string method;
  std::string propagation;
  std::uint64_t seed = 0;
  double lambda = 0;
  int max_iters = 0;
};

/// Deterministic summary document (no timing information, so reruns are byte-identical).
void write_summary_json(std::ostream& os, const SummaryInfo& info,
                        const SolveReport<double>& report);

void write_timing_json(std::ostream& os, double wall_seconds);

/// Opens path for writing, creating parent directories; throws Error when not writable.
void write_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace dyngame::io
