#pragma once

#include <dyngame/backward.hpp>

#include <optional>
#include <string>
#include <vector>

namespace dyngame {

template <typename Scalar>
struct SolveOptions {
  Method method = Method::newton;
  Scalar lambda = 0;
  int max_iters = 100;
  Scalar residual_tol = Scalar(1e-8);
  Scalar step_tol = Scalar(1e-12);
  bool capture_iterates = false;
  ValuePropagation propagation = ValuePropagation::open_loop;
  int threads = 0;  // 0: DYNGAME_THREADS / hardware default
};

/// Stacked stationarity residual: player 0's gradients over its own inputs at k = 0..T-1,
/// then player 1's, and so on. per[n][k] views the same numbers per stage.
template <typename Scalar>
struct Residual {
  Vector<Scalar> stacked;
  std::vector<std::vector<Vector<Scalar>>> per;

  [[nodiscard]] Scalar inf_norm() const {
    return stacked.size() ? stacked.cwiseAbs().maxCoeff() : Scalar(0);
  }
};

enum class Termination { residual_tol, step_tol, max_iters, stage_singular, rollout_diverged };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::residual_tol: return "residual_tol";
    case Termination::step_tol: return "step_tol";
    case Termination::max_iters: return "max_iters";
    case Termination::stage_singular: return "stage_singular";
    case Termination::rollout_diverged: return "rollout_diverged";
  }
  return "unknown";
}

inline const char* to_string(Method m) { return m == Method::newton ? "newton" : "ddp"; }

template <typename Scalar>
struct IterationRecord {
  int iter;  // 1-based
  Scalar residual_inf;
  Scalar step_inf;
  Vector<Scalar> costs;
  int reg_events;
  Trajectory<Scalar> iterate;  // filled only with capture_iterates
};

template <typename Scalar>
struct SolveReport {
  Trajectory<Scalar> trajectory;
  /// Policy of one more backward pass at the final trajectory; empty if that stage game
  /// was singular.
  AffinePolicy<Scalar> policy;
  std::vector<IterationRecord<Scalar>> records;
  Termination termination = Termination::max_iters;
  std::string message;
  Vector<Scalar> initial_costs;
  Scalar initial_residual_inf{};
  Scalar final_residual_inf{};

  [[nodiscard]] int iterations() const noexcept { return static_cast<int>(records.size()); }
};

/// Costate sweep Omega_{n,k} = M^{1x} + Omega_{n,k+1} A_k, then
/// dJ_n/du_{n,k} = M^{1u_n} + Omega_{n,k+1} B_k restricted to player n's columns.
template <typename Scalar>
Residual<Scalar> stationarity_residual(const std::vector<StageDerivatives<Scalar>>& stages,
                                       const TerminalDerivatives<Scalar>& terminal,
                                       const std::vector<int>& input_dims) {
  const int T = static_cast<int>(stages.size());
  const int N = static_cast<int>(input_dims.size());
  detail::require(T > 0 && static_cast<int>(terminal.V.size()) == N, "residual: bad bundles");
  const int nx = stages.front().state_dim();
  int per_stage = 0;
  for (int d : input_dims) per_stage += d;
  Residual<Scalar> r;
  r.stacked.resize(static_cast<Eigen::Index>(per_stage) * T);
  r.per.assign(N, std::vector<Vector<Scalar>>(T));
  int base = 0;
  int col = 0;
  for (int n = 0; n < N; ++n) {
    const int d = input_dims[n];
    RowVector<Scalar> omega = terminal.V[n].block(0, 1, 1, nx);
    for (int k = T - 1; k >= 0; --k) {
      const auto& sd = stages[k];
      RowVector<Scalar> g = sd.M[n].block(0, 1 + nx + col, 1, d) + omega * sd.B.middleCols(col, d);
      r.per[n][k] = g.transpose();
      r.stacked.segment(base + k * d, d) = g.transpose();
      omega = sd.M[n].block(0, 1, 1, nx) + omega * sd.A;
    }
    base += T * d;
    col += d;
  }
  return r;
}

template <typename Scalar>
Residual<Scalar> stationarity_residual(const GameProblem<Scalar>& problem,
                                       const Trajectory<Scalar>& traj, int threads = 0) {
  const auto stages = differentiate_trajectory(problem, traj, threads);
  const auto terminal = differentiate_terminal(problem, traj.states.back());
  return stationarity_residual(stages, terminal, problem.input_dims());
}

/// Newton forward pass on the linearized dynamics; returns u_bar + du.
template <typename Scalar>
VectorSequence<Scalar> newton_forward(const Trajectory<Scalar>& nominal,
                                      const AffinePolicy<Scalar>& policy,
                                      const std::vector<StageDerivatives<Scalar>>& stages) {
  const int T = nominal.horizon();
  detail::require(policy.horizon() == T && static_cast<int>(stages.size()) == T,
                  "newton_forward: horizon mismatch");
  VectorSequence<Scalar> out(T);
  Vector<Scalar> dx = Vector<Scalar>::Zero(nominal.states.front().size());
  for (int k = 0; k < T; ++k) {
    detail::require(policy.gains[k].cols() == dx.size() &&
                        policy.offsets[k].size() == nominal.controls[k].size(),
                    "newton_forward: policy dimension mismatch");
    const Vector<Scalar> du = policy.gains[k] * dx + policy.offsets[k];
    out[k] = nominal.controls[k] + du;
    dx = stages[k].A * dx + stages[k].B * du;
  }
  return out;
}

/// Closed-loop simulation from x0 with u = u_bar + K (x - x_bar) + s.
template <typename Scalar>
Trajectory<Scalar> follow_policy(const GameProblem<Scalar>& problem,
                                 const Trajectory<Scalar>& nominal,
                                 const AffinePolicy<Scalar>& policy, const Vector<Scalar>& x0) {
  check_dimensions(problem, nominal);
  const int T = problem.horizon();
  detail::require(policy.horizon() == T, "policy horizon mismatch");
  detail::require(x0.size() == problem.state_dim(), "x0 has the wrong dimension");
  Trajectory<Scalar> out;
  out.states.reserve(T + 1);
  out.controls.reserve(T);
  out.states.push_back(x0);
  for (int k = 0; k < T; ++k) {
    out.controls.push_back(nominal.controls[k] +
                           policy.gains[k] * (out.states[k] - nominal.states[k]) +
                           policy.offsets[k]);
    Vector<Scalar> next = problem.dynamics().value(k, out.states[k], out.controls[k]);
    if (!next.allFinite()) throw StageError(k + 1, "rollout produced a non-finite state");
    out.states.push_back(std::move(next));
  }
  return out;
}

/// Forward pass through the true dynamics with u = u_bar + K (x - x_bar) + s.
template <typename Scalar>
Trajectory<Scalar> ddp_forward(const GameProblem<Scalar>& problem, const Trajectory<Scalar>& nominal,
                               const AffinePolicy<Scalar>& policy) {
  return follow_policy(problem, nominal, policy, nominal.states.front());
}

template <typename Scalar>
struct StepResult {
  Trajectory<Scalar> next;
  BackwardResult<Scalar> backward;
  VectorSequence<Scalar> du;
  Scalar step_inf{};
};

/// One backward + forward pass of the chosen method from a nominal whose bundles are given.
template <typename Scalar>
StepResult<Scalar> step(const GameProblem<Scalar>& problem, const Trajectory<Scalar>& nominal,
                        const std::vector<StageDerivatives<Scalar>>& stages,
                        const TerminalDerivatives<Scalar>& terminal, Method method,
                        const BackwardOptions<Scalar>& opts) {
  StepResult<Scalar> r;
  r.backward = backward(method, stages, terminal, problem.input_dims(), opts);
  if (method == Method::newton) {
    r.next = rollout(problem, nominal.states.front(),
                     newton_forward(nominal, r.backward.policy, stages));
  } else {
    r.next = ddp_forward(problem, nominal, r.backward.policy);
  }
  r.du.resize(problem.horizon());
  for (int k = 0; k < problem.horizon(); ++k) r.du[k] = r.next.controls[k] - nominal.controls[k];
  r.step_inf = detail::inf_norm(r.du);
  return r;
}

template <typename Scalar>
StepResult<Scalar> step(const GameProblem<Scalar>& problem, const Trajectory<Scalar>& nominal,
                        Method method, const BackwardOptions<Scalar>& opts = {}, int threads = 0) {
  const auto stages = differentiate_trajectory(problem, nominal, threads);
  const auto terminal = differentiate_terminal(problem, nominal.states.back());
  return step(problem, nominal, stages, terminal, method, opts);
}

/// Iterates backward and forward passes until the residual or step tolerance is met, the
/// iteration budget is spent, a stage game is singular, or a rollout diverges. At least one
/// iteration is always performed; each record reports the residual at the new iterate.
template <typename Scalar>
SolveReport<Scalar> solve(const GameProblem<Scalar>& problem, const Vector<Scalar>& x0,
                          const VectorSequence<Scalar>& u0, const SolveOptions<Scalar>& opts) {
  if (opts.max_iters < 1) throw Error("max_iters must be at least 1");
  if (!(opts.residual_tol > 0) || !(opts.step_tol > 0)) throw Error("tolerances must be positive");
  if (!(opts.lambda >= 0)) throw Error("lambda must be nonnegative");

  SolveReport<Scalar> rep;
  rep.trajectory = rollout(problem, x0, u0);
  rep.initial_costs = total_cost(problem, rep.trajectory).totals;
  auto stages = differentiate_trajectory(problem, rep.trajectory, opts.threads);
  auto terminal = differentiate_terminal(problem, rep.trajectory.states.back());
  rep.initial_residual_inf = stationarity_residual(stages, terminal, problem.input_dims()).inf_norm();
  rep.final_residual_inf = rep.initial_residual_inf;

  BackwardOptions<Scalar> bopts;
  bopts.lambda = opts.lambda;
  bopts.propagation = opts.propagation;

  for (int it = 1; it <= opts.max_iters; ++it) {
    StepResult<Scalar> st;
    try {
      st = step(problem, rep.trajectory, stages, terminal, opts.method, bopts);
    } catch (const StageGameError& e) {
      rep.termination = Termination::stage_singular;
      rep.message = e.what();
      return rep;
    } catch (const StageError& e) {
      rep.termination = Termination::rollout_diverged;
      rep.message = e.what();
      return rep;
    }
    rep.trajectory = std::move(st.next);
    stages = differentiate_trajectory(problem, rep.trajectory, opts.threads);
    terminal = differentiate_terminal(problem, rep.trajectory.states.back());
    rep.final_residual_inf =
        stationarity_residual(stages, terminal, problem.input_dims()).inf_norm();

    IterationRecord<Scalar> rec{it, rep.final_residual_inf, st.step_inf,
                                total_cost(problem, rep.trajectory).totals,
                                static_cast<int>(st.backward.log.size()), {}};
    if (opts.capture_iterates) rec.iterate = rep.trajectory;
    rep.records.push_back(std::move(rec));

    if (!std::isfinite(static_cast<double>(rep.final_residual_inf))) {
      rep.termination = Termination::rollout_diverged;
      rep.message = "residual became non-finite";
      return rep;
    }
    if (rep.final_residual_inf < opts.residual_tol) {
      rep.termination = Termination::residual_tol;
      break;
    }
    if (st.step_inf < opts.step_tol) {
      rep.termination = Termination::step_tol;
      break;
    }
    rep.termination = Termination::max_iters;
  }
  try {
    rep.policy = backward(opts.method, stages, terminal, problem.input_dims(), bopts).policy;
  } catch (const StageGameError&) {
    rep.policy = {};
  }
  return rep;
}

}  // namespace dyngame
