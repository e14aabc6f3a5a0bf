#pragma once

#include <dyngame/solver.hpp>
#include <dyngame/validate.hpp>

#include <Eigen/LU>

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace dyngame {

/// Flat player-major coordinate of input j of player n at stage k.
template <typename Scalar>
int control_index(const GameProblem<Scalar>& problem, int n, int k, int j) {
  int base = 0;
  for (int m = 0; m < n; ++m) base += problem.horizon() * problem.input_dim(m);
  return base + k * problem.input_dim(n) + j;
}

template <typename Scalar>
int control_count(const GameProblem<Scalar>& problem) {
  return problem.horizon() * problem.input_dim();
}

template <typename Scalar>
Vector<Scalar> flatten_controls(const GameProblem<Scalar>& problem,
                                const VectorSequence<Scalar>& controls) {
  Vector<Scalar> out(control_count(problem));
  for (int n = 0; n < problem.num_players(); ++n)
    for (int k = 0; k < problem.horizon(); ++k)
      for (int j = 0; j < problem.input_dim(n); ++j)
        out[control_index(problem, n, k, j)] = controls[k][problem.input_offset(n) + j];
  return out;
}

template <typename Scalar>
VectorSequence<Scalar> unflatten_controls(const GameProblem<Scalar>& problem,
                                          const Vector<Scalar>& flat) {
  detail::require(flat.size() == control_count(problem), "flat control vector has the wrong size");
  VectorSequence<Scalar> out(problem.horizon(), Vector<Scalar>(problem.input_dim()));
  for (int n = 0; n < problem.num_players(); ++n)
    for (int k = 0; k < problem.horizon(); ++k)
      for (int j = 0; j < problem.input_dim(n); ++j)
        out[k][problem.input_offset(n) + j] = flat[control_index(problem, n, k, j)];
  return out;
}

template <typename Scalar>
Scalar player_cost(const GameProblem<Scalar>& problem, const Vector<Scalar>& x0,
                   const VectorSequence<Scalar>& controls, int n) {
  return total_cost(problem, rollout(problem, x0, controls)).totals[n];
}

/// Central-difference dJ_n/du_{:,k} for every stage (all players' inputs).
template <typename Scalar>
VectorSequence<Scalar> fd_cost_gradient(const GameProblem<Scalar>& problem,
                                        const Vector<Scalar>& x0,
                                        const VectorSequence<Scalar>& controls, int n,
                                        Scalar h = Scalar(1e-6)) {
  VectorSequence<Scalar> out(problem.horizon(), Vector<Scalar>(problem.input_dim()));
  VectorSequence<Scalar> u = controls;
  for (int k = 0; k < problem.horizon(); ++k) {
    for (int j = 0; j < problem.input_dim(); ++j) {
      const Scalar v = u[k][j];
      const Scalar s = detail::scaled_step(h, v);
      u[k][j] = v + s;
      const Scalar jp = player_cost(problem, x0, u, n);
      u[k][j] = v - s;
      const Scalar jm = player_cost(problem, x0, u, n);
      u[k][j] = v;
      out[k][j] = (jp - jm) / (2 * s);
    }
  }
  return out;
}

/// Central-difference gradient of sum_{i >= k} c_{n,i} with respect to x_k, holding the
/// nominal controls fixed and re-simulating from the perturbed state.
template <typename Scalar>
RowVector<Scalar> fd_cost_to_go_state_gradient(const GameProblem<Scalar>& problem,
                                               const Trajectory<Scalar>& traj, int n, int k,
                                               Scalar h = Scalar(1e-6)) {
  const int T = problem.horizon();
  detail::require(0 <= k && k <= T, "stage index out of range");
  auto cost_to_go = [&](const Vector<Scalar>& xk) {
    Scalar J = 0;
    Vector<Scalar> x = xk;
    for (int i = k; i < T; ++i) {
      J += problem.stage_cost(n).value(i, x, traj.controls[i]);
      x = problem.dynamics().value(i, x, traj.controls[i]);
    }
    return J + problem.terminal_cost(n).value(x);
  };
  RowVector<Scalar> out(problem.state_dim());
  for (int i = 0; i < problem.state_dim(); ++i) {
    Vector<Scalar> xp = traj.states[k], xm = traj.states[k];
    const Scalar s = detail::scaled_step(h, xp[i]);
    xp[i] += s;
    xm[i] -= s;
    out[i] = (cost_to_go(xp) - cost_to_go(xm)) / (2 * s);
  }
  return out;
}

/// Residual and central-difference Jacobian of the stacked stationarity residual, both in
/// flat player-major coordinates (see control_index).
template <typename Scalar>
struct DenseSystem {
  Vector<Scalar> residual;
  Matrix<Scalar> jacobian;
  std::vector<int> input_dims;
  int horizon = 0;
};

inline constexpr int kDefaultOracleMaxDim = 400;

template <typename Scalar>
DenseSystem<Scalar> dense_jacobian(const GameProblem<Scalar>& problem, const Vector<Scalar>& x0,
                                   const VectorSequence<Scalar>& controls, Scalar h = Scalar(1e-6),
                                   int max_dim = kDefaultOracleMaxDim) {
  detail::require(h > 0, "finite-difference step must be positive");
  const int dim = control_count(problem);
  if (dim > max_dim)
    throw OracleError("dense oracle refuses dimension " + std::to_string(dim) + " (limit " +
                      std::to_string(max_dim) + ")");
  auto residual_at = [&](const Vector<Scalar>& flat) {
    return stationarity_residual(problem, rollout(problem, x0, unflatten_controls(problem, flat)), 1)
        .stacked;
  };
  DenseSystem<Scalar> ds;
  ds.input_dims = problem.input_dims();
  ds.horizon = problem.horizon();
  Vector<Scalar> flat = flatten_controls(problem, controls);
  ds.residual = residual_at(flat);
  ds.jacobian.resize(dim, dim);
  for (int i = 0; i < dim; ++i) {
    const Scalar v = flat[i];
    const Scalar s = detail::scaled_step(h, v);
    flat[i] = v + s;
    const Vector<Scalar> rp = residual_at(flat);
    flat[i] = v - s;
    const Vector<Scalar> rm = residual_at(flat);
    flat[i] = v;
    ds.jacobian.col(i) = (rp - rm) / (2 * s);
  }
  return ds;
}

/// Solves J du = -r and reshapes the result per stage (players stacked in index order).
template <typename Scalar>
VectorSequence<Scalar> dense_newton_step(const DenseSystem<Scalar>& ds) {
  Eigen::PartialPivLU<Matrix<Scalar>> lu(ds.jacobian);
  const Scalar rc = ds.jacobian.allFinite() ? lu.rcond() : Scalar(0);
  if (!(rc >= Scalar(1e-14)))
    throw OracleError("dense Jacobian is singular (reciprocal condition estimate " +
                      std::to_string(static_cast<double>(rc)) + ")");
  const Vector<Scalar> flat = -lu.solve(ds.residual);
  int nu = 0;
  for (int d : ds.input_dims) nu += d;
  VectorSequence<Scalar> out(ds.horizon, Vector<Scalar>(nu));
  int base = 0, col = 0;
  for (int d : ds.input_dims) {
    for (int k = 0; k < ds.horizon; ++k) out[k].segment(col, d) = flat.segment(base + k * d, d);
    base += ds.horizon * d;
    col += d;
  }
  return out;
}

/// Rows and columns of player n in the dense Jacobian, i.e. the FD Hessian of J_n over
/// that player's own controls.
template <typename Scalar>
Matrix<Scalar> own_block(const DenseSystem<Scalar>& ds, int n) {
  int base = 0;
  for (int m = 0; m < n; ++m) base += ds.horizon * ds.input_dims[m];
  const int d = ds.horizon * ds.input_dims[n];
  return ds.jacobian.block(base, base, d, d);
}

struct ProbeResult {
  /// min over samples of J_n(u + delta) - J_n(u); negative means a profitable deviation.
  double min_cost_change = 0.0;
  /// -min_cost_change: the largest decrease of J_n found.
  double max_decrease = 0.0;
};

/// Unilateral deviation sampling: perturbations of player n's controls only, uniform on the
/// sphere of the given radius, from a seeded generator.
template <typename Scalar>
ProbeResult best_response_probe(const GameProblem<Scalar>& problem, const Trajectory<Scalar>& traj,
                                int n, int num_samples, Scalar radius, std::uint64_t seed = 1) {
  detail::require(0 <= n && n < problem.num_players(), "player index out of range");
  ProbeResult r;
  if (!(radius > 0) || num_samples <= 0) return r;
  const Vector<Scalar>& x0 = traj.states.front();
  const Scalar J0 = total_cost(problem, traj).totals[n];
  const int T = problem.horizon();
  const int d = problem.input_dim(n);
  const int off = problem.input_offset(n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector<Scalar> dir(T * d);
  bool first = true;
  for (int s = 0; s < num_samples; ++s) {
    for (int i = 0; i < dir.size(); ++i) dir[i] = Scalar(normal(rng));
    dir *= radius / dir.norm();
    VectorSequence<Scalar> u = traj.controls;
    for (int k = 0; k < T; ++k) u[k].segment(off, d) += dir.segment(k * d, d);
    double change;
    try {
      change = static_cast<double>(player_cost(problem, x0, u, n) - J0);
    } catch (const StageError&) {
      continue;  // a diverging deviation is not profitable
    }
    if (first || change < r.min_cost_change) r.min_cost_change = change;
    first = false;
  }
  r.max_decrease = -r.min_cost_change;
  return r;
}

/// Player n's single-agent problem when every other player follows
/// u_m = u_bar_m + K_m (x - x_bar) + s_m. Derivatives follow by the chain rule through the
/// affine substitution z = Q [x; v] + const.
template <typename Scalar>
GameProblem<Scalar> substitute_policies(const GameProblem<Scalar>& problem,
                                        const Trajectory<Scalar>& nominal,
                                        const AffinePolicy<Scalar>& policy, int n) {
  const int nx = problem.state_dim();
  const int nu = problem.input_dim();
  const int d = problem.input_dim(n);
  const int off = problem.input_offset(n);
  const int T = problem.horizon();
  detail::require(policy.horizon() == T, "policy horizon mismatch");

  struct Data {
    GameProblem<Scalar> base;
    Trajectory<Scalar> nominal;
    AffinePolicy<Scalar> policy;
    int n, off, d;
  };
  auto data = std::make_shared<Data>(Data{problem, nominal, policy, n, off, d});

  auto joint = [data](int k, const Vector<Scalar>& x, const Vector<Scalar>& v) {
    Vector<Scalar> u = data->nominal.controls[k] +
                       data->policy.gains[k] * (x - data->nominal.states[k]) +
                       data->policy.offsets[k];
    u.segment(data->off, data->d) = v;
    return u;
  };
  // Q maps [dx; dv] to [dx; du].
  auto Q = [data, nx, nu](int k) {
    const int dd = data->d;
    Matrix<Scalar> q = Matrix<Scalar>::Zero(nx + nu, nx + dd);
    q.topLeftCorner(nx, nx).setIdentity();
    Matrix<Scalar> C = data->policy.gains[k];
    C.middleRows(data->off, dd).setZero();
    q.bottomLeftCorner(nu, nx) = C;
    q.block(nx + data->off, nx, dd, dd).setIdentity();
    return q;
  };

  Dynamics<Scalar> dyn;
  dyn.value = [data, joint](int k, const Vector<Scalar>& x, const Vector<Scalar>& v) {
    return data->base.dynamics().value(k, x, joint(k, x, v));
  };
  dyn.derivatives = [data, joint, Q, nx](int k, const Vector<Scalar>& x, const Vector<Scalar>& v) {
    auto fd = data->base.dynamics().derivatives(k, x, joint(k, x, v));
    const Matrix<Scalar> q = Q(k);
    Matrix<Scalar> AB(nx, fd.A.cols() + fd.B.cols());
    AB << fd.A, fd.B;
    const Matrix<Scalar> J = AB * q;
    DynamicsDerivatives<Scalar> out;
    out.A = J.leftCols(nx);
    out.B = J.rightCols(data->d);
    for (const auto& g : fd.G) out.G.push_back(q.transpose() * g * q);
    return out;
  };

  StageCost<Scalar> cost;
  cost.value = [data, joint](int k, const Vector<Scalar>& x, const Vector<Scalar>& v) {
    return data->base.stage_cost(data->n).value(k, x, joint(k, x, v));
  };
  cost.derivatives = [data, joint, Q](int k, const Vector<Scalar>& x, const Vector<Scalar>& v) {
    auto c = data->base.stage_cost(data->n).derivatives(k, x, joint(k, x, v));
    const Matrix<Scalar> q = Q(k);
    return CostDerivatives<Scalar>{c.value, q.transpose() * c.gradient,
                                   q.transpose() * c.hessian * q};
  };

  return GameProblem<Scalar>(T, nx, {d}, std::move(dyn), {std::move(cost)},
                             {problem.terminal_cost(n)});
}

template <typename Scalar>
struct BestResponse {
  Scalar policy_cost{};  // J_n when everyone follows the policy from x0
  Scalar best_cost{};    // J_n of player n's best response against the others' policies
  SolveReport<Scalar> report;
};

/// Compares the cost player n incurs by following the affine policy from x0 with the cost of
/// its single-agent best response while everyone else keeps following the policy.
template <typename Scalar>
BestResponse<Scalar> feedback_best_response(const GameProblem<Scalar>& problem,
                                            const Trajectory<Scalar>& nominal,
                                            const AffinePolicy<Scalar>& policy, int n,
                                            const Vector<Scalar>& x0,
                                            Scalar residual_tol = Scalar(1e-10),
                                            int max_iters = 50) {
  const Trajectory<Scalar> followed = follow_policy(problem, nominal, policy, x0);
  BestResponse<Scalar> br;
  br.policy_cost = total_cost(problem, followed).totals[n];

  const auto single = substitute_policies(problem, nominal, policy, n);
  VectorSequence<Scalar> v0(problem.horizon());
  for (int k = 0; k < problem.horizon(); ++k)
    v0[k] = followed.controls[k].segment(problem.input_offset(n), problem.input_dim(n));
  SolveOptions<Scalar> opts;
  opts.method = Method::newton;
  opts.residual_tol = residual_tol;
  opts.max_iters = max_iters;
  opts.threads = 1;
  br.report = solve(single, x0, v0, opts);
  br.best_cost = total_cost(single, br.report.trajectory).totals[0];
  return br;
}

}  // namespace dyngame
