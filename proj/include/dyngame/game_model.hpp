#pragma once

#include <dyngame/types.hpp>

#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace dyngame {

/// First and second derivatives of f_k at (x, u). G[l] is the Hessian of the l-th
/// output component over z = [x; u].
template <typename Scalar>
struct DynamicsDerivatives {
  Matrix<Scalar> A;
  Matrix<Scalar> B;
  std::vector<Matrix<Scalar>> G;
};

/// Value, gradient and Hessian of a scalar cost over its argument (z = [x; u] for
/// stage costs, x for terminal costs).
template <typename Scalar>
struct CostDerivatives {
  Scalar value{};
  Vector<Scalar> gradient;
  Matrix<Scalar> hessian;
};

template <typename Scalar>
struct Dynamics {
  std::function<Vector<Scalar>(int, const Vector<Scalar>&, const Vector<Scalar>&)> value;
  std::function<DynamicsDerivatives<Scalar>(int, const Vector<Scalar>&, const Vector<Scalar>&)>
      derivatives;
};

template <typename Scalar>
struct StageCost {
  std::function<Scalar(int, const Vector<Scalar>&, const Vector<Scalar>&)> value;
  std::function<CostDerivatives<Scalar>(int, const Vector<Scalar>&, const Vector<Scalar>&)>
      derivatives;
};

template <typename Scalar>
struct TerminalCost {
  std::function<Scalar(const Vector<Scalar>&)> value;
  std::function<CostDerivatives<Scalar>(const Vector<Scalar>&)> derivatives;
};

/// An unconstrained finite-horizon N-player game. Controls exist at k = 0..T-1,
/// terminal costs depend on x_T only. Immutable once built.
template <typename Scalar>
class GameProblem {
 public:
  GameProblem(int horizon, int state_dim, std::vector<int> input_dims, Dynamics<Scalar> dynamics,
              std::vector<StageCost<Scalar>> stage_costs,
              std::vector<TerminalCost<Scalar>> terminal_costs)
      : horizon_(horizon),
        state_dim_(state_dim),
        input_dims_(std::move(input_dims)),
        dynamics_(std::move(dynamics)),
        stage_costs_(std::move(stage_costs)),
        terminal_costs_(std::move(terminal_costs)) {
    detail::require(horizon_ > 0, "horizon must be positive");
    detail::require(state_dim_ > 0, "state dimension must be positive");
    detail::require(!input_dims_.empty(), "at least one player is required");
    for (int d : input_dims_) detail::require(d > 0, "input dimensions must be positive");
    detail::require(static_cast<int>(stage_costs_.size()) == num_players(),
                    "one stage cost per player is required");
    detail::require(static_cast<int>(terminal_costs_.size()) == num_players(),
                    "one terminal cost per player is required");
    detail::require(static_cast<bool>(dynamics_.value) && static_cast<bool>(dynamics_.derivatives),
                    "dynamics value and derivative suppliers are required");
    offsets_.resize(input_dims_.size() + 1, 0);
    std::partial_sum(input_dims_.begin(), input_dims_.end(), offsets_.begin() + 1);
  }

  [[nodiscard]] int horizon() const noexcept { return horizon_; }
  [[nodiscard]] int state_dim() const noexcept { return state_dim_; }
  [[nodiscard]] int num_players() const noexcept { return static_cast<int>(input_dims_.size()); }
  [[nodiscard]] const std::vector<int>& input_dims() const noexcept { return input_dims_; }
  [[nodiscard]] int input_dim(int n) const { return input_dims_.at(n); }
  /// Total stacked input dimension.
  [[nodiscard]] int input_dim() const noexcept { return offsets_.back(); }
  /// First column of player n inside the stacked input u_{:,k}.
  [[nodiscard]] int input_offset(int n) const { return offsets_.at(n); }

  [[nodiscard]] const Dynamics<Scalar>& dynamics() const noexcept { return dynamics_; }
  [[nodiscard]] const StageCost<Scalar>& stage_cost(int n) const { return stage_costs_.at(n); }
  [[nodiscard]] const TerminalCost<Scalar>& terminal_cost(int n) const {
    return terminal_costs_.at(n);
  }

 private:
  int horizon_;
  int state_dim_;
  std::vector<int> input_dims_;
  std::vector<int> offsets_;
  Dynamics<Scalar> dynamics_;
  std::vector<StageCost<Scalar>> stage_costs_;
  std::vector<TerminalCost<Scalar>> terminal_costs_;
};

template <typename Scalar>
struct Trajectory {
  VectorSequence<Scalar> states;    // x_0 .. x_T
  VectorSequence<Scalar> controls;  // u_{:,0} .. u_{:,T-1}

  [[nodiscard]] int horizon() const noexcept { return static_cast<int>(controls.size()); }
};

template <typename Scalar>
struct PlayerCosts {
  Vector<Scalar> totals;
  /// Column k < T holds stage costs, column T the terminal cost.
  Matrix<Scalar> per_stage;
};

template <typename Scalar>
VectorSequence<Scalar> zero_controls(const GameProblem<Scalar>& problem) {
  return VectorSequence<Scalar>(problem.horizon(), Vector<Scalar>::Zero(problem.input_dim()));
}

template <typename Scalar>
void check_dimensions(const GameProblem<Scalar>& problem, const Trajectory<Scalar>& traj) {
  detail::require(traj.horizon() == problem.horizon(), "trajectory horizon mismatch");
  detail::require(static_cast<int>(traj.states.size()) == problem.horizon() + 1,
                  "trajectory must hold T+1 states");
  for (const auto& x : traj.states)
    detail::require(x.size() == problem.state_dim(), "state dimension mismatch");
  for (const auto& u : traj.controls)
    detail::require(u.size() == problem.input_dim(), "input dimension mismatch");
}

/// Simulates x_{k+1} = f_k(x_k, u_k). Throws StageError on the first non-finite state.
template <typename Scalar>
Trajectory<Scalar> rollout(const GameProblem<Scalar>& problem, const Vector<Scalar>& x0,
                           const VectorSequence<Scalar>& controls) {
  const int T = problem.horizon();
  detail::require(x0.size() == problem.state_dim(),
                  "x0 has dimension " + std::to_string(x0.size()) + ", expected " +
                      std::to_string(problem.state_dim()));
  detail::require(static_cast<int>(controls.size()) == T,
                  "expected " + std::to_string(T) + " controls, got " +
                      std::to_string(controls.size()));
  Trajectory<Scalar> traj;
  traj.controls = controls;
  traj.states.reserve(T + 1);
  traj.states.push_back(x0);
  for (int k = 0; k < T; ++k) {
    detail::require(controls[k].size() == problem.input_dim(),
                    "control at stage " + std::to_string(k) + " has wrong dimension");
    Vector<Scalar> next = problem.dynamics().value(k, traj.states[k], controls[k]);
    detail::require(next.size() == problem.state_dim(),
                    "f_" + std::to_string(k) + " returned the wrong dimension");
    if (!next.allFinite()) throw StageError(k + 1, "rollout produced a non-finite state");
    traj.states.push_back(std::move(next));
  }
  return traj;
}

/// Per-player cost over stages [begin, end). end == T+1 includes the terminal cost.
template <typename Scalar>
Vector<Scalar> stage_range_cost(const GameProblem<Scalar>& problem, const Trajectory<Scalar>& traj,
                                int begin, int end) {
  check_dimensions(problem, traj);
  const int T = problem.horizon();
  detail::require(0 <= begin && begin <= end && end <= T + 1, "invalid stage range");
  Vector<Scalar> out = Vector<Scalar>::Zero(problem.num_players());
  for (int n = 0; n < problem.num_players(); ++n) {
    for (int k = begin; k < std::min(end, T); ++k)
      out[n] += problem.stage_cost(n).value(k, traj.states[k], traj.controls[k]);
    if (end == T + 1) out[n] += problem.terminal_cost(n).value(traj.states[T]);
  }
  return out;
}

template <typename Scalar>
PlayerCosts<Scalar> total_cost(const GameProblem<Scalar>& problem, const Trajectory<Scalar>& traj) {
  check_dimensions(problem, traj);
  const int N = problem.num_players();
  const int T = problem.horizon();
  PlayerCosts<Scalar> out;
  out.per_stage = Matrix<Scalar>::Zero(N, T + 1);
  for (int n = 0; n < N; ++n) {
    for (int k = 0; k < T; ++k)
      out.per_stage(n, k) = problem.stage_cost(n).value(k, traj.states[k], traj.controls[k]);
    out.per_stage(n, T) = problem.terminal_cost(n).value(traj.states[T]);
  }
  out.totals = out.per_stage.rowwise().sum();
  return out;
}

namespace detail {

/// Central-difference step for coordinate value v.
template <typename Scalar>
Scalar scaled_step(Scalar h, Scalar v) {
  using std::abs;
  return h * std::max(Scalar(1), abs(v));
}

}  // namespace detail

}  // namespace dyngame
