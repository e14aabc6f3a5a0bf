#include <dyngame/cli.hpp>

#include <dyngame/catalog.hpp>
#include <dyngame/io.hpp>
#include <dyngame/oracle.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

namespace dyngame::cli {

namespace {

using catalog::Instance;
using Seq = VectorSequence<double>;

std::string describe(const std::exception& e) { return e.what(); }

Method parse_method(const std::string& m) {
  if (m == "newton") return Method::newton;
  if (m == "ddp") return Method::ddp;
  throw Error("unknown method '" + m + "' (expected newton, ddp or both)");
}

ValuePropagation parse_propagation(const std::string& p) {
  if (p == "open-loop") return ValuePropagation::open_loop;
  if (p == "feedback") return ValuePropagation::feedback;
  throw Error("unknown propagation '" + p + "' (expected open-loop or feedback)");
}

std::vector<Method> methods_of(const RunConfig& cfg) {
  if (cfg.method == "both") return {Method::newton, Method::ddp};
  return {parse_method(cfg.method)};
}

SolveOptions<double> options_of(const RunConfig& cfg, const Instance& inst, Method m) {
  SolveOptions<double> o;
  o.method = m;
  o.lambda = cfg.lambda.value_or(inst.record.lambda);
  o.max_iters = cfg.max_iters;
  o.residual_tol = cfg.residual_tol;
  o.step_tol = cfg.step_tol;
  o.propagation = parse_propagation(cfg.propagation);
  o.threads = cfg.threads;
  return o;
}

int exit_code(Termination t) {
  switch (t) {
    case Termination::residual_tol: return kConverged;
    case Termination::step_tol:
    case Termination::max_iters: return kNotConverged;
    case Termination::stage_singular: return kSingular;
    case Termination::rollout_diverged: return kDiverged;
  }
  return kNotConverged;
}

double l2_distance(const Seq& a, const Seq& b) {
  double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]).squaredNorm();
  return std::sqrt(s);
}

double l2_norm(const Seq& a) {
  double s = 0;
  for (const auto& v : a) s += v.squaredNorm();
  return std::sqrt(s);
}

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += std::log(x[i]) / n;
    my += std::log(y[i]) / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxy / sxx;
}

// ---- verify suite -----------------------------------------------------------

enum class Outcome { pass, fail, skip };

struct CheckRow {
  std::string name;
  Outcome outcome;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(3) << v;
  return s.str();
}

Seq random_controls(const GameProblem<double>& p, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  Seq u = zero_controls(p);
  for (auto& v : u)
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  return u;
}

CheckRow check_dense_newton(const std::string& name, const GameProblem<double>& p,
                            const Vector<double>& x0, const Seq& u, int max_dim) {
  const int dim = control_count(p);
  if (dim > max_dim)
    return {name, Outcome::skip,
            "dimension " + std::to_string(dim) + " exceeds oracle limit " + std::to_string(max_dim)};
  const auto ds = dense_jacobian(p, x0, u, 1e-6, max_dim);
  const auto dense = dense_newton_step(ds);
  const auto fast = step(p, rollout(p, x0, u), Method::newton);
  double diff = 0;
  for (std::size_t k = 0; k < u.size(); ++k)
    diff = std::max(diff, (dense[k] - fast.du[k]).cwiseAbs().maxCoeff());
  const double tol = std::max(1e-6, 1e-4 * fast.step_inf);
  return {name, diff <= tol ? Outcome::pass : Outcome::fail,
          "max |du_dense - du_stagewise| = " + fmt(diff) + " (tol " + fmt(tol) + ")"};
}

CheckRow check_gradient_identity(const std::string& name, const GameProblem<double>& p,
                                 const Vector<double>& x0, std::mt19937_64& rng, int points) {
  double worst = 0;  // max over entries of |err| / tol
  for (int s = 0; s < points; ++s) {
    const Seq u = random_controls(p, rng, 0.5);
    const auto res = stationarity_residual(p, rollout(p, x0, u));
    for (int n = 0; n < p.num_players(); ++n) {
      const auto fd = fd_cost_gradient(p, x0, u, n);
      for (int k = 0; k < p.horizon(); ++k) {
        const Vector<double> ref = fd[k].segment(p.input_offset(n), p.input_dim(n));
        for (Eigen::Index j = 0; j < ref.size(); ++j) {
          const double tol = std::max(1e-5, 1e-3 * std::abs(ref[j]));
          worst = std::max(worst, std::abs(res.per[n][k][j] - ref[j]) / tol);
        }
      }
    }
  }
  return {name, worst <= 1.0 ? Outcome::pass : Outcome::fail,
          "worst error / tolerance = " + fmt(worst)};
}

CheckRow check_closeness(const std::string& name, const GameProblem<double>& p,
                         const Vector<double>& x0, const Seq& u_star, double correction_sign,
                         std::mt19937_64& rng) {
  Seq dir = random_controls(p, rng, 1.0);
  const double nd = l2_norm(dir);
  for (auto& v : dir) v /= nd;
  BackwardOptions<double> ddp_opts;
  ddp_opts.correction_sign = correction_sign;
  std::vector<double> eps{1e-1, 1e-2, 1e-3}, gap;
  for (double e : eps) {
    Seq u = u_star;
    for (std::size_t k = 0; k < u.size(); ++k) u[k] += e * dir[k];
    const auto nominal = rollout(p, x0, u);
    const auto sn = step(p, nominal, Method::newton);
    const auto sd = step(p, nominal, Method::ddp, ddp_opts);
    gap.push_back(std::max(l2_distance(sn.du, sd.du), 1e-300));
  }
  const double slope = loglog_slope(eps, gap);
  return {name, slope >= 1.8 ? Outcome::pass : Outcome::fail,
          "log-log slope " + fmt(slope) + " (need >= 1.8), gaps " + fmt(gap[0]) + ", " +
              fmt(gap[1]) + ", " + fmt(gap[2])};
}

}  // namespace

// ---- config -------------------------------------------------------------------

void load_config_json(const std::string& text, RunConfig& cfg) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw Error(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error("config must be a JSON object");
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& key = it.key();
      const auto& v = it.value();
      if (key == "problem") cfg.problem = v.get<std::string>();
      else if (key == "method") cfg.method = v.get<std::string>();
      else if (key == "lambda") cfg.lambda = v.get<double>();
      else if (key == "max_iters") cfg.max_iters = v.get<int>();
      else if (key == "residual_tol") cfg.residual_tol = v.get<double>();
      else if (key == "step_tol") cfg.step_tol = v.get<double>();
      else if (key == "seed") cfg.seed = v.get<std::uint64_t>();
      else if (key == "out") cfg.out = v.get<std::string>();
      else if (key == "propagation") cfg.propagation = v.get<std::string>();
      else if (key == "threads") cfg.threads = v.get<int>();
      else if (key == "oracle_max_dim") cfg.oracle_max_dim = v.get<int>();
      else if (key == "inject_fault") cfg.inject_fault = v.get<std::string>();
      else if (key == "lockstep") cfg.lockstep = v.get<bool>();
      else if (key == "overrides") {
        if (!v.is_object()) throw Error("'overrides' must be an object of numbers");
        for (auto o = v.begin(); o != v.end(); ++o) cfg.overrides[o.key()] = o.value().get<double>();
      } else {
        throw Error("unknown config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("config has a value of the wrong type: ") + e.what());
  }
}

void check_config(const RunConfig& cfg) {
  if (cfg.method != "both") parse_method(cfg.method);
  parse_propagation(cfg.propagation);
  if (cfg.max_iters < 1) throw Error("max_iters must be at least 1");
  if (!(cfg.residual_tol > 0) || !(cfg.step_tol > 0)) throw Error("tolerances must be positive");
  if (cfg.lambda && !(*cfg.lambda >= 0)) throw Error("lambda must be nonnegative");
  if (!cfg.inject_fault.empty() && cfg.inject_fault != "ddp-sign")
    throw Error("unknown fault '" + cfg.inject_fault + "' (supported: ddp-sign)");
  if (cfg.oracle_max_dim < 0) throw Error("oracle_max_dim must be nonnegative");
}

// ---- commands -------------------------------------------------------------------

int cmd_solve(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const Instance inst = catalog::make_instance(cfg.problem, cfg.overrides, cfg.seed);
  int code = kConverged;
  for (Method m : methods_of(cfg)) {
    const auto opts = options_of(cfg, inst, m);
    const auto t0 = std::chrono::steady_clock::now();
    const auto report = solve(inst.problem, inst.x0, inst.u0, opts);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const std::filesystem::path dir = std::filesystem::path(cfg.out) / to_string(m);
    std::ostringstream traj, iters, summary, timing;
    io::write_trajectory_csv(traj, report.trajectory);
    io::write_iterations_jsonl(iters, report);
    io::write_summary_json(summary, {cfg.problem, to_string(m), cfg.propagation, cfg.seed,
                                     opts.lambda, opts.max_iters},
                           report);
    io::write_timing_json(timing, wall);
    io::write_file(dir / "trajectory.csv", traj.str());
    io::write_file(dir / "iterations.jsonl", iters.str());
    io::write_file(dir / "summary.json", summary.str());
    io::write_file(dir / "timing.json", timing.str());

    out << to_string(m) << ": " << to_string(report.termination) << " after "
        << report.iterations() << " iterations, residual " << report.final_residual_inf
        << " -> " << dir.string() << '\n';
    const int c = exit_code(report.termination);
    if (c != kConverged) {
      err << to_string(m) << ": not converged (" << to_string(report.termination) << ")";
      if (!report.message.empty()) err << ": " << report.message;
      err << '\n';
      if (code == kConverged) code = c;
    }
  }
  return code;
}

int cmd_verify(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  std::vector<CheckRow> rows;
  std::mt19937_64 rng(cfg.seed);
  const double ddp_sign = cfg.inject_fault == "ddp-sign" ? -1.0 : 1.0;
  auto guarded = [&](const std::string& name, auto&& fn) {
    try {
      rows.push_back(fn());
    } catch (const std::exception& e) {
      rows.push_back({name, Outcome::fail, "error: " + describe(e)});
    }
  };

  const auto lq = catalog::random_lq_game(cfg.seed, 2, 3, {1, 2}, 6);
  const auto lq_x0 = catalog::random_x0(cfg.seed, 3);
  const auto smooth = catalog::random_smooth_game(cfg.seed, 2, 3, {1, 1}, 6);
  const auto smooth_x0 = catalog::random_x0(cfg.seed, 3);
  const auto od = catalog::owner_dog();
  Vector<double> od_x0(2);
  od_x0 << -1.0, 2.0;

  guarded("dense-newton/random-lq", [&] {
    return check_dense_newton("dense-newton/random-lq", lq, lq_x0, zero_controls(lq),
                              cfg.oracle_max_dim);
  });
  guarded("dense-newton/random-smooth", [&] {
    return check_dense_newton("dense-newton/random-smooth", smooth, smooth_x0,
                              random_controls(smooth, rng, 0.3), cfg.oracle_max_dim);
  });
  guarded("gradient-identity/owner-dog",
          [&] { return check_gradient_identity("gradient-identity/owner-dog", od, od_x0, rng, 3); });
  guarded("gradient-identity/random-smooth", [&] {
    return check_gradient_identity("gradient-identity/random-smooth", smooth, smooth_x0, rng, 3);
  });
  guarded("closeness-slope/owner-dog", [&] {
    SolveOptions<double> warm;
    warm.lambda = 1.0;
    warm.max_iters = 100;
    warm.residual_tol = 1e-12;
    auto r = solve(od, od_x0, zero_controls(od), warm);
    SolveOptions<double> polish;
    polish.max_iters = 50;
    polish.residual_tol = 1e-12;
    r = solve(od, od_x0, r.trajectory.controls, polish);
    if (r.termination != Termination::residual_tol)
      return CheckRow{"closeness-slope/owner-dog", Outcome::fail, "reference equilibrium not found"};
    return check_closeness("closeness-slope/owner-dog", od, od_x0, r.trajectory.controls, ddp_sign,
                           rng);
  });
  for (int n = 0; n < lq.num_players(); ++n) {
    const std::string name = "best-response/random-lq/player-" + std::to_string(n);
    guarded(name, [&] {
      SolveOptions<double> o;
      o.max_iters = 5;
      o.residual_tol = 1e-9;
      const auto r = solve(lq, lq_x0, zero_controls(lq), o);
      const auto probe = best_response_probe(lq, r.trajectory, n, 200, 1e-2, cfg.seed);
      return CheckRow{name, probe.min_cost_change >= -1e-8 ? Outcome::pass : Outcome::fail,
                      "min cost change " + fmt(probe.min_cost_change)};
    });
  }

  bool ok = true;
  for (const auto& r : rows) {
    const char* tag = r.outcome == Outcome::pass ? "PASS" : r.outcome == Outcome::fail ? "FAIL" : "SKIP";
    out << std::left << std::setw(6) << tag << std::setw(40) << r.name << r.detail << '\n';
    ok = ok && r.outcome != Outcome::fail;
  }
  if (!ok) err << "verification failed\n";
  return ok ? kConverged : kNotConverged;
}

int cmd_compare(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const Instance inst = catalog::make_instance(cfg.problem, cfg.overrides, cfg.seed);
  std::vector<std::vector<double>> series;
  std::vector<SolveReport<double>> reports;
  for (Method m : {Method::newton, Method::ddp}) {
    auto opts = options_of(cfg, inst, m);
    opts.capture_iterates = true;
    reports.push_back(solve(inst.problem, inst.x0, inst.u0, opts));
    const auto& rep = reports.back();
    std::vector<double> d{l2_distance(inst.u0, rep.trajectory.controls)};
    for (const auto& rec : rep.records) d.push_back(l2_distance(rec.iterate.controls, rep.trajectory.controls));
    series.push_back(std::move(d));
  }
  std::ostringstream csv;
  csv << "iter,newton,ddp\n";
  const std::size_t rows = std::max(series[0].size(), series[1].size());
  for (std::size_t i = 0; i < rows; ++i) {
    csv << i;
    for (const auto& s : series) csv << ',' << (i < s.size() ? io::number(s[i]) : "");
    csv << '\n';
  }
  const std::filesystem::path dir(cfg.out);
  io::write_file(dir / "compare.csv", csv.str());
  out << "compare: newton " << reports[0].iterations() << " iterations ("
      << to_string(reports[0].termination) << "), ddp " << reports[1].iterations()
      << " iterations (" << to_string(reports[1].termination) << ") -> "
      << (dir / "compare.csv").string() << '\n';

  if (cfg.lockstep) {
    // Both updates from every Newton iterate as a common nominal.
    BackwardOptions<double> bo;
    bo.lambda = cfg.lambda.value_or(inst.record.lambda);
    bo.propagation = parse_propagation(cfg.propagation);
    const auto& final_u = reports[0].trajectory.controls;
    std::ostringstream lcsv;
    lcsv << "iter,distance_to_final,update_gap\n";
    std::vector<Seq> nominals{inst.u0};
    for (const auto& rec : reports[0].records) nominals.push_back(rec.iterate.controls);
    for (std::size_t i = 0; i < nominals.size(); ++i) {
      try {
        const auto nominal = rollout(inst.problem, inst.x0, nominals[i]);
        const auto sn = step(inst.problem, nominal, Method::newton, bo, cfg.threads);
        const auto sd = step(inst.problem, nominal, Method::ddp, bo, cfg.threads);
        lcsv << i << ',' << io::number(l2_distance(nominals[i], final_u)) << ','
             << io::number(l2_distance(sn.du, sd.du)) << '\n';
      } catch (const std::exception& e) {
        err << "lockstep iterate " << i << ": " << e.what() << '\n';
      }
    }
    io::write_file(dir / "closeness.csv", lcsv.str());
    out << "lockstep closeness -> " << (dir / "closeness.csv").string() << '\n';
  }
  int code = kConverged;
  for (const auto& r : reports) {
    const int c = exit_code(r.termination);
    if (c != kConverged && code == kConverged) code = c;
  }
  return code;
}

int cmd_list_problems(std::ostream& out) {
  for (const auto& rec : catalog::list_problems()) {
    out << rec.name << "  T=" << rec.horizon << "  lambda=" << rec.lambda << "  x0=["
        << rec.x0.transpose() << "]  " << rec.description << "\n   parameters:";
    for (const auto& [k, v] : rec.parameters) out << ' ' << k << '=' << v;
    out << '\n';
  }
  return kConverged;
}

// ---- argument parsing ------------------------------------------------------------

namespace {

struct Flags {
  std::string config, problem, method, out, propagation, fault;
  double lambda = 0, residual_tol = 0, step_tol = 0;
  int max_iters = 0, oracle_max_dim = 0, threads = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> sets;
  bool lockstep = false;
  std::map<std::string, CLI::Option*> opts;
};

void add_run_flags(CLI::App* sub, Flags& f, bool verify_flags, bool compare_flags) {
  f.opts["config"] = sub->add_option("--config", f.config, "JSON run configuration");
  f.opts["problem"] = sub->add_option("--problem", f.problem, "catalog problem name");
  f.opts["method"] = sub->add_option("--method", f.method, "newton | ddp | both");
  f.opts["lambda"] = sub->add_option("--lambda", f.lambda, "regularization magnitude");
  f.opts["max_iters"] = sub->add_option("--max-iters", f.max_iters, "iteration budget");
  f.opts["residual_tol"] = sub->add_option("--residual-tol", f.residual_tol, "stop when |J|_inf below");
  f.opts["step_tol"] = sub->add_option("--step-tol", f.step_tol, "stop when |du|_inf below");
  f.opts["seed"] = sub->add_option("--seed", f.seed, "seed for random problems and probes");
  f.opts["out"] = sub->add_option("--out", f.out, "output directory");
  f.opts["propagation"] = sub->add_option("--propagation", f.propagation, "open-loop | feedback");
  f.opts["threads"] = sub->add_option("--threads", f.threads, "derivative worker cap");
  f.opts["set"] = sub->add_option("--set", f.sets, "parameter override key=value")->allow_extra_args(false);
  if (verify_flags) {
    f.opts["oracle_max_dim"] =
        sub->add_option("--oracle-max-dim", f.oracle_max_dim, "dense oracle dimension guard");
    f.opts["inject_fault"] = sub->add_option("--inject-fault", f.fault, "self-test fault (ddp-sign)");
  }
  if (compare_flags) f.opts["lockstep"] = sub->add_flag("--lockstep", f.lockstep, "closeness series");
}

bool given(const Flags& f, const std::string& key) {
  auto it = f.opts.find(key);
  return it != f.opts.end() && it->second->count() > 0;
}

RunConfig resolve(const Flags& f) {
  RunConfig cfg;
  if (given(f, "config")) {
    std::ifstream in(f.config);
    if (!in) throw Error("cannot read config " + f.config);
    std::stringstream ss;
    ss << in.rdbuf();
    load_config_json(ss.str(), cfg);
  }
  if (given(f, "problem")) cfg.problem = f.problem;
  if (given(f, "method")) cfg.method = f.method;
  if (given(f, "lambda")) cfg.lambda = f.lambda;
  if (given(f, "max_iters")) cfg.max_iters = f.max_iters;
  if (given(f, "residual_tol")) cfg.residual_tol = f.residual_tol;
  if (given(f, "step_tol")) cfg.step_tol = f.step_tol;
  if (given(f, "seed")) cfg.seed = f.seed;
  if (given(f, "out")) cfg.out = f.out;
  if (given(f, "propagation")) cfg.propagation = f.propagation;
  if (given(f, "threads")) cfg.threads = f.threads;
  if (given(f, "oracle_max_dim")) cfg.oracle_max_dim = f.oracle_max_dim;
  if (given(f, "inject_fault")) cfg.inject_fault = f.fault;
  if (given(f, "lockstep")) cfg.lockstep = f.lockstep;
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw Error("--set expects key=value, got '" + s + "'");
    try {
      std::size_t used = 0;
      const double v = std::stod(s.substr(eq + 1), &used);
      if (used != s.size() - eq - 1) throw std::invalid_argument(s);
      cfg.overrides[s.substr(0, eq)] = v;
    } catch (const std::logic_error&) {
      throw Error("--set value is not a number in '" + s + "'");
    }
  }
  check_config(cfg);
  return cfg;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Second-order solvers for N-player dynamic games"};
  app.require_subcommand(1);
  Flags solve_f, verify_f, compare_f;
  auto* solve_cmd = app.add_subcommand("solve", "solve a catalog problem");
  add_run_flags(solve_cmd, solve_f, false, false);
  auto* verify_cmd = app.add_subcommand("verify", "run the oracle verification suite");
  add_run_flags(verify_cmd, verify_f, true, false);
  auto* compare_cmd = app.add_subcommand("compare", "run both methods and compare iterates");
  add_run_flags(compare_cmd, compare_f, false, true);
  app.add_subcommand("list-problems", "list the problem catalog");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kConverged;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return kUsage;
  }

  try {
    if (app.got_subcommand("list-problems")) return cmd_list_problems(out);
    if (solve_cmd->parsed()) return cmd_solve(resolve(solve_f), out, err);
    if (verify_cmd->parsed()) return cmd_verify(resolve(verify_f), out, err);
    if (compare_cmd->parsed()) return cmd_compare(resolve(compare_f), out, err);
  } catch (const StageGameError& e) {
    err << "error: " << e.what() << '\n';
    return kSingular;
  } catch (const StageError& e) {
    err << "error: " << e.what() << '\n';
    return kDiverged;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}

}  // namespace dyngame::cli
