#pragma once

#include <dyngame/game_model.hpp>

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace dyngame {

/// Derivative bundle at one stage. M[n] has layout [[2c, c_x, c_u], [c_x', c_xx, c_xu],
/// [c_u', c_ux, c_uu]], i.e. (1+n_x+n_u) square.
template <typename Scalar>
struct StageDerivatives {
  Matrix<Scalar> A;
  Matrix<Scalar> B;
  std::vector<Matrix<Scalar>> G;
  std::vector<Matrix<Scalar>> M;

  [[nodiscard]] int state_dim() const noexcept { return static_cast<int>(A.rows()); }
  [[nodiscard]] int input_dim() const noexcept { return static_cast<int>(B.cols()); }
};

/// V[n] = [[2c_T, c_x], [c_x', c_xx]] per player.
template <typename Scalar>
struct TerminalDerivatives {
  std::vector<Matrix<Scalar>> V;
};

namespace detail {

template <typename Scalar>
Matrix<Scalar> symmetrized(const Matrix<Scalar>& m) {
  return (m + m.transpose()) / Scalar(2);
}

template <typename Scalar>
Matrix<Scalar> cost_block(const CostDerivatives<Scalar>& d) {
  const auto nz = d.gradient.size();
  Matrix<Scalar> M(nz + 1, nz + 1);
  M(0, 0) = 2 * d.value;
  M.block(0, 1, 1, nz) = d.gradient.transpose();
  M.block(1, 0, nz, 1) = d.gradient;
  M.bottomRightCorner(nz, nz) = symmetrized<Scalar>(d.hessian);
  return M;
}

/// Worker count for per-stage parallel work: DYNGAME_THREADS caps hardware concurrency,
/// an explicit request (> 0) caps both.
inline int worker_count(int requested) {
  int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("DYNGAME_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) hw = std::min(hw, cap);
  }
  return requested > 0 ? std::min(hw, requested) : hw;
}

}  // namespace detail

/// Analytic derivative bundle of stage k at (x, u).
template <typename Scalar>
StageDerivatives<Scalar> differentiate_stage(const GameProblem<Scalar>& problem, int k,
                                             const Vector<Scalar>& x, const Vector<Scalar>& u) {
  const int nx = problem.state_dim();
  const int nu = problem.input_dim();
  detail::require(0 <= k && k < problem.horizon(), "stage index out of range");
  detail::require(x.size() == nx && u.size() == nu, "stage point has the wrong dimension");
  StageDerivatives<Scalar> out;
  try {
    auto dyn = problem.dynamics().derivatives(k, x, u);
    detail::require(dyn.A.rows() == nx && dyn.A.cols() == nx && dyn.B.rows() == nx &&
                        dyn.B.cols() == nu && static_cast<int>(dyn.G.size()) == nx,
                    "f_" + std::to_string(k) + " derivative supplier returned wrong shapes");
    out.A = std::move(dyn.A);
    out.B = std::move(dyn.B);
    out.G.reserve(nx);
    for (auto& g : dyn.G) out.G.push_back(detail::symmetrized<Scalar>(g));
    out.M.reserve(problem.num_players());
    for (int n = 0; n < problem.num_players(); ++n) {
      auto c = problem.stage_cost(n).derivatives(k, x, u);
      detail::require(c.gradient.size() == nx + nu, "stage cost gradient has the wrong size");
      out.M.push_back(detail::cost_block(c));
    }
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(k, e.what());
  }
  return out;
}

template <typename Scalar>
TerminalDerivatives<Scalar> differentiate_terminal(const GameProblem<Scalar>& problem,
                                                   const Vector<Scalar>& xT) {
  detail::require(xT.size() == problem.state_dim(), "terminal state has the wrong dimension");
  TerminalDerivatives<Scalar> out;
  try {
    for (int n = 0; n < problem.num_players(); ++n) {
      auto c = problem.terminal_cost(n).derivatives(xT);
      detail::require(c.gradient.size() == problem.state_dim(),
                      "terminal cost gradient has the wrong size");
      out.V.push_back(detail::cost_block(c));
    }
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(problem.horizon(), e.what());
  }
  return out;
}

/// Central-difference bundle built from value maps only: first-order blocks with step h,
/// second-order blocks from nested differences with step max(h, 1e-3) (both scaled by
/// max(1, |z_i|)). Test and validation use only.
template <typename Scalar>
StageDerivatives<Scalar> fd_stage_oracle(const GameProblem<Scalar>& problem, int k,
                                         const Vector<Scalar>& x, const Vector<Scalar>& u,
                                         Scalar h) {
  detail::require(h > 0, "finite-difference step must be positive");
  const int nx = problem.state_dim();
  const int nu = problem.input_dim();
  const int nz = nx + nu;
  const Scalar h2 = std::max(h, Scalar(1e-3));
  Vector<Scalar> z(nz);
  z << x, u;
  auto f = [&](const Vector<Scalar>& zz) {
    return problem.dynamics().value(k, zz.head(nx), zz.tail(nu));
  };
  auto c = [&](int n, const Vector<Scalar>& zz) {
    return problem.stage_cost(n).value(k, zz.head(nx), zz.tail(nu));
  };
  auto shifted = [&](int i, Scalar di, int j, Scalar dj) {
    Vector<Scalar> zz = z;
    zz[i] += di;
    if (j >= 0) zz[j] += dj;
    return zz;
  };

  StageDerivatives<Scalar> out;
  Matrix<Scalar> J(nx, nz);
  for (int i = 0; i < nz; ++i) {
    const Scalar s = detail::scaled_step(h, z[i]);
    J.col(i) = (f(shifted(i, s, -1, 0)) - f(shifted(i, -s, -1, 0))) / (2 * s);
  }
  out.A = J.leftCols(nx);
  out.B = J.rightCols(nu);

  out.G.assign(nx, Matrix<Scalar>::Zero(nz, nz));
  const int N = problem.num_players();
  std::vector<Vector<Scalar>> grad(N, Vector<Scalar>(nz));
  std::vector<Matrix<Scalar>> hess(N, Matrix<Scalar>(nz, nz));
  const Vector<Scalar> f0 = f(z);
  for (int i = 0; i < nz; ++i) {
    const Scalar si = detail::scaled_step(h, z[i]);
    const Scalar ti = detail::scaled_step(h2, z[i]);
    for (int n = 0; n < N; ++n)
      grad[n][i] = (c(n, shifted(i, si, -1, 0)) - c(n, shifted(i, -si, -1, 0))) / (2 * si);
    for (int j = i; j < nz; ++j) {
      const Scalar tj = detail::scaled_step(h2, z[j]);
      if (i == j) {
        // Three-point second difference on the diagonal.
        const Vector<Scalar> zp = shifted(i, ti, -1, 0), zm = shifted(i, -ti, -1, 0);
        const Vector<Scalar> d2 = (f(zp) - 2 * f0 + f(zm)) / (ti * ti);
        for (int l = 0; l < nx; ++l) out.G[l](i, i) = d2[l];
        for (int n = 0; n < N; ++n)
          hess[n](i, i) = (c(n, zp) - 2 * c(n, z) + c(n, zm)) / (ti * ti);
        continue;
      }
      const auto zpp = shifted(i, ti, j, tj), zpm = shifted(i, ti, j, -tj);
      const auto zmp = shifted(i, -ti, j, tj), zmm = shifted(i, -ti, j, -tj);
      const Vector<Scalar> d2 = (f(zpp) - f(zpm) - f(zmp) + f(zmm)) / (4 * ti * tj);
      for (int l = 0; l < nx; ++l) out.G[l](i, j) = out.G[l](j, i) = d2[l];
      for (int n = 0; n < N; ++n)
        hess[n](i, j) = hess[n](j, i) =
            (c(n, zpp) - c(n, zpm) - c(n, zmp) + c(n, zmm)) / (4 * ti * tj);
    }
  }
  for (int n = 0; n < N; ++n)
    out.M.push_back(detail::cost_block(CostDerivatives<Scalar>{c(n, z), grad[n], hess[n]}));
  return out;
}

/// Central-difference terminal bundle from the terminal value maps (same step rules).
template <typename Scalar>
TerminalDerivatives<Scalar> fd_terminal_oracle(const GameProblem<Scalar>& problem,
                                               const Vector<Scalar>& x, Scalar h) {
  detail::require(h > 0, "finite-difference step must be positive");
  const int nx = problem.state_dim();
  const Scalar h2 = std::max(h, Scalar(1e-3));
  TerminalDerivatives<Scalar> out;
  for (int n = 0; n < problem.num_players(); ++n) {
    const auto& c = problem.terminal_cost(n).value;
    auto at = [&](int i, Scalar di, int j, Scalar dj) {
      Vector<Scalar> xx = x;
      xx[i] += di;
      if (j >= 0) xx[j] += dj;
      return c(xx);
    };
    const Scalar c0 = c(x);
    Vector<Scalar> g(nx);
    Matrix<Scalar> H(nx, nx);
    for (int i = 0; i < nx; ++i) {
      const Scalar si = detail::scaled_step(h, x[i]);
      const Scalar ti = detail::scaled_step(h2, x[i]);
      g[i] = (at(i, si, -1, 0) - at(i, -si, -1, 0)) / (2 * si);
      H(i, i) = (at(i, ti, -1, 0) - 2 * c0 + at(i, -ti, -1, 0)) / (ti * ti);
      for (int j = i + 1; j < nx; ++j) {
        const Scalar tj = detail::scaled_step(h2, x[j]);
        H(i, j) = H(j, i) =
            (at(i, ti, j, tj) - at(i, ti, j, -tj) - at(i, -ti, j, tj) + at(i, -ti, j, -tj)) /
            (4 * ti * tj);
      }
    }
    out.V.push_back(detail::cost_block(CostDerivatives<Scalar>{c0, g, H}));
  }
  return out;
}

/// Second-order Taylor prediction f + A dx + B du + (1/2) [dx; du]' G^l [dx; du] per row.
template <typename Scalar>
Vector<Scalar> eval_quadratic_dynamics(const StageDerivatives<Scalar>& sd,
                                       const Vector<Scalar>& f_nominal, const Vector<Scalar>& dx,
                                       const Vector<Scalar>& du) {
  const int nx = sd.state_dim();
  detail::require(f_nominal.size() == nx && dx.size() == nx && du.size() == sd.input_dim(),
                  "quadratic dynamics: dimension mismatch");
  Vector<Scalar> dz(dx.size() + du.size());
  dz << dx, du;
  Vector<Scalar> out = f_nominal + sd.A * dx + sd.B * du;
  for (int l = 0; l < nx; ++l) out[l] += Scalar(0.5) * dz.dot(sd.G[l] * dz);
  return out;
}

/// Bundles for every stage along traj, computed in parallel for long horizons.
template <typename Scalar>
std::vector<StageDerivatives<Scalar>> differentiate_trajectory(const GameProblem<Scalar>& problem,
                                                               const Trajectory<Scalar>& traj,
                                                               int threads = 0) {
  check_dimensions(problem, traj);
  const int T = problem.horizon();
  std::vector<StageDerivatives<Scalar>> out(T);
  const int workers = std::min(detail::worker_count(threads), std::max(1, T / 16));
  if (workers <= 1 || T < 32) {
    for (int k = 0; k < T; ++k)
      out[k] = differentiate_stage(problem, k, traj.states[k], traj.controls[k]);
    return out;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int k = w; k < T; k += workers)
          out[k] = differentiate_stage(problem, k, traj.states[k], traj.controls[k]);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace dyngame
