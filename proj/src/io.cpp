#include <dyngame/io.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace dyngame::io {

std::string number(double v) {
  if (!std::isfinite(v)) return "null";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::string array(const Vector<double>& v) {
  std::string out = "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += number(v[i]);
  }
  return out + "]";
}

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out + "\"";
}

}  // namespace

void write_trajectory_csv(std::ostream& os, const Trajectory<double>& traj) {
  const auto nx = traj.states.front().size();
  const auto nu = traj.controls.empty() ? 0 : traj.controls.front().size();
  os << 'k';
  for (Eigen::Index i = 0; i < nx; ++i) os << ",x_" << i;
  for (Eigen::Index j = 0; j < nu; ++j) os << ",u_" << j;
  os << '\n';
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    os << k;
    for (Eigen::Index i = 0; i < nx; ++i) os << ',' << number(traj.states[k][i]);
    for (Eigen::Index j = 0; j < nu; ++j) {
      os << ',';
      if (k < traj.controls.size()) os << number(traj.controls[k][j]);
    }
    os << '\n';
  }
}

void write_iterations_jsonl(std::ostream& os, const SolveReport<double>& report) {
  for (const auto& r : report.records) {
    os << "{\"iter\": " << r.iter << ", \"residual_inf\": " << number(r.residual_inf)
       << ", \"step_inf\": " << number(r.step_inf) << ", \"costs\": " << array(r.costs)
       << ", \"reg_events\": " << r.reg_events << "}\n";
  }
}

void write_summary_json(std::ostream& os, const SummaryInfo& info,
                        const SolveReport<double>& report) {
  os << "{\n"
     << "  \"problem\": " << quoted(info.problem) << ",\n"
     << "  \"method\": " << quoted(info.method) << ",\n"
     << "  \"propagation\": " << quoted(info.propagation) << ",\n"
     << "  \"seed\": " << info.seed << ",\n"
     << "  \"lambda\": " << number(info.lambda) << ",\n"
     << "  \"max_iters\": " << info.max_iters << ",\n"
     << "  \"termination\": " << quoted(to_string(report.termination)) << ",\n"
     << "  \"message\": " << quoted(report.message) << ",\n"
     << "  \"iterations\": " << report.iterations() << ",\n"
     << "  \"initial_residual_inf\": " << number(report.initial_residual_inf) << ",\n"
     << "  \"final_residual_inf\": " << number(report.final_residual_inf) << ",\n"
     << "  \"initial_costs\": " << array(report.initial_costs) << ",\n"
     << "  \"final_costs\": "
     << array(report.records.empty() ? report.initial_costs : report.records.back().costs)
     << "\n}\n";
}

void write_timing_json(std::ostream& os, double wall_seconds) {
  os << "{\"wall_seconds\": " << number(wall_seconds) << "}\n";
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw Error("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f << contents;
  if (!f) throw Error("failed writing " + path.string());
}

}  // namespace dyngame::io
