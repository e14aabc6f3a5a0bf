#pragma once

#include <dyngame/derivatives.hpp>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace dyngame {

enum class Method { newton, ddp };

/// How each player's value matrix is carried to the previous stage.
///
/// open_loop: S_n = L_n' Gamma_n L, where L substitutes the joint stage policy and L_n keeps
/// only player n's own rows of it. The x-rows of S_n are then the player's costate as an
/// affine function of the state, which is what makes the Newton recursion reproduce the
/// exact Newton step on the stationarity residual. S_n is generally not symmetric.
///
/// feedback: S_n = L' Gamma_n L with the full policy on both sides, i.e. the value of the
/// quadratic game under feedback play. Symmetric, coincides with open_loop for one player,
/// and its fixed points are feedback (not open-loop) stationary for N >= 2.
enum class ValuePropagation { open_loop, feedback };

template <typename Scalar>
struct AffinePolicy {
  std::vector<Matrix<Scalar>> gains;    // K_k, n_u x n_x
  std::vector<Vector<Scalar>> offsets;  // s_k, n_u

  [[nodiscard]] int horizon() const noexcept { return static_cast<int>(offsets.size()); }
};

template <typename Scalar>
struct StageGame {
  Matrix<Scalar> F;
  Matrix<Scalar> P;
  Vector<Scalar> H;
  Matrix<Scalar> K;
  Vector<Scalar> s;
  Scalar rcond{};
};

template <typename Scalar>
struct ValueBundle {
  std::vector<std::vector<Matrix<Scalar>>> S;         // [n][k], k = 0..T
  std::vector<std::vector<RowVector<Scalar>>> omega;  // [n][k], Newton only
  std::vector<Matrix<Scalar>> F, P;                   // [k]
  std::vector<Vector<Scalar>> H;                      // [k]
  std::vector<std::vector<Matrix<Scalar>>> gamma;     // [n][k], on request (regularized)
  std::vector<std::vector<Matrix<Scalar>>> D;         // [n][k], on request
};

struct RegularizationEvent {
  int stage;
  int player;
  double min_eig;
  double shift;
};

using RegularizationLog = std::vector<RegularizationEvent>;

template <typename Scalar>
struct BackwardOptions {
  Scalar lambda = 0;
  bool capture_intermediates = false;
  ValuePropagation propagation = ValuePropagation::open_loop;
  /// Multiplies the second-order dynamics correction. Only a fault-injection hook: 1 is the
  /// algorithm, -1 flips the DDP term for verification self-tests.
  Scalar correction_sign = 1;
};

template <typename Scalar>
struct BackwardResult {
  AffinePolicy<Scalar> policy;
  ValueBundle<Scalar> values;
  RegularizationLog log;
};

template <typename Scalar>
struct Regularized {
  Matrix<Scalar> matrix;
  Scalar shift{};
  Scalar min_eig{};
};

/// Eigenvalue shift: if the smallest eigenvalue e of the symmetric part of gamma is below
/// lambda, adds (lambda - e) I. lambda = 0 disables the check altogether.
template <typename Scalar>
Regularized<Scalar> regularize(const Matrix<Scalar>& gamma, Scalar lambda) {
  detail::require(gamma.rows() == gamma.cols(), "regularize: matrix must be square");
  if (!(lambda > 0)) return {gamma, Scalar(0), std::numeric_limits<Scalar>::quiet_NaN()};
  const Matrix<Scalar> sym = detail::symmetrized<Scalar>(gamma);
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(sym, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success || !eig.eigenvalues().allFinite())
    throw Error("regularize: eigenvalue computation failed");
  const Scalar e = eig.eigenvalues().minCoeff();
  if (e >= lambda) return {gamma, Scalar(0), e};
  Matrix<Scalar> shifted = gamma;
  shifted.diagonal().array() += lambda - e;
  return {std::move(shifted), lambda - e, e};
}

/// Stacks every player's own-input rows of Gamma_n into F, P, H and solves
/// F s = -H, F K = -P. state_dim fixes the block layout [1 | x | u].
template <typename Scalar>
StageGame<Scalar> solve_stage_game(const std::vector<Matrix<Scalar>>& gammas,
                                   const std::vector<int>& input_dims, int state_dim, int k = 0) {
  detail::require(gammas.size() == input_dims.size(), "one Gamma per player is required");
  const int nx = state_dim;
  const int nu = std::accumulate(input_dims.begin(), input_dims.end(), 0);
  const int ux = 1 + nx;
  StageGame<Scalar> g;
  g.F.resize(nu, nu);
  g.P.resize(nu, nx);
  g.H.resize(nu);
  int row = 0;
  for (std::size_t n = 0; n < gammas.size(); ++n) {
    const auto& G = gammas[n];
    detail::require(G.rows() == 1 + nx + nu && G.cols() == 1 + nx + nu,
                    "Gamma has the wrong size");
    const int d = input_dims[n];
    g.F.middleRows(row, d) = G.block(ux + row, ux, d, nu);
    g.P.middleRows(row, d) = G.block(ux + row, 1, d, nx);
    g.H.segment(row, d) = G.block(ux + row, 0, d, 1);
    row += d;
  }
  Eigen::PartialPivLU<Matrix<Scalar>> lu(g.F);
  g.rcond = g.F.allFinite() ? lu.rcond() : Scalar(0);
  if (!(g.rcond >= Scalar(1e-12))) throw StageGameError(k, static_cast<double>(g.rcond));
  g.s = -lu.solve(g.H);
  g.K = -lu.solve(g.P);
  return g;
}

namespace detail {

/// Shared Newton/DDP recursion. The only method-dependent quantity is the vector w_n that
/// weights the dynamics Hessians in D_n = sum_l w_n[l] G^l: the costate row Omega_{n,k+1}
/// for Newton, the propagated value gradient S_{n,k+1}^{x1} for DDP.
template <typename Scalar>
BackwardResult<Scalar> backward_pass(Method method,
                                     const std::vector<StageDerivatives<Scalar>>& stages,
                                     const TerminalDerivatives<Scalar>& terminal,
                                     const std::vector<int>& input_dims,
                                     const BackwardOptions<Scalar>& opts) {
  const int T = static_cast<int>(stages.size());
  const int N = static_cast<int>(input_dims.size());
  require(T > 0, "backward pass needs at least one stage");
  require(static_cast<int>(terminal.V.size()) == N, "terminal bundle has the wrong player count");
  const int nx = stages.front().state_dim();
  const int nu = stages.front().input_dim();
  const int nz = nx + nu;
  const bool newton = method == Method::newton;

  BackwardResult<Scalar> r;
  auto& vb = r.values;
  vb.S.assign(N, std::vector<Matrix<Scalar>>(T + 1));
  if (newton) vb.omega.assign(N, std::vector<RowVector<Scalar>>(T + 1));
  vb.F.resize(T);
  vb.P.resize(T);
  vb.H.resize(T);
  if (opts.capture_intermediates) {
    vb.gamma.assign(N, std::vector<Matrix<Scalar>>(T));
    vb.D.assign(N, std::vector<Matrix<Scalar>>(T));
  }
  r.policy.gains.resize(T);
  r.policy.offsets.resize(T);

  for (int n = 0; n < N; ++n) {
    require(terminal.V[n].rows() == 1 + nx && terminal.V[n].cols() == 1 + nx,
            "terminal bundle has the wrong size");
    vb.S[n][T] = terminal.V[n];
    if (newton) vb.omega[n][T] = terminal.V[n].block(0, 1, 1, nx);
  }

  std::vector<int> offsets(N + 1, 0);
  std::partial_sum(input_dims.begin(), input_dims.end(), offsets.begin() + 1);
  require(offsets.back() == nu, "input dimensions do not match the stage bundles");

  std::vector<Matrix<Scalar>> gammas(N);
  Matrix<Scalar> AB(nx, nz);
  Matrix<Scalar> L = Matrix<Scalar>::Zero(1 + nz, 1 + nx);
  L(0, 0) = 1;
  L.block(1, 1, nx, nx).setIdentity();

  for (int k = T - 1; k >= 0; --k) {
    const auto& sd = stages[k];
    require(sd.state_dim() == nx && sd.input_dim() == nu && static_cast<int>(sd.M.size()) == N,
            "stage bundle dimensions are inconsistent");
    AB << sd.A, sd.B;

    for (int n = 0; n < N; ++n) {
      const Matrix<Scalar>& S = vb.S[n][k + 1];
      Vector<Scalar> w = newton ? Vector<Scalar>(vb.omega[n][k + 1].transpose())
                                : Vector<Scalar>(S.block(1, 0, nx, 1));
      w *= opts.correction_sign;
      Matrix<Scalar> D = Matrix<Scalar>::Zero(nz, nz);
      for (int l = 0; l < nx; ++l)
        if (w[l] != Scalar(0)) D.noalias() += w[l] * sd.G[l];

      Matrix<Scalar> G = sd.M[n];
      G(0, 0) += S(0, 0);
      G.block(0, 1, 1, nz).noalias() += S.block(0, 1, 1, nx) * AB;
      G.block(1, 0, nz, 1).noalias() += AB.transpose() * S.block(1, 0, nx, 1);
      G.block(1, 1, nz, nz).noalias() += AB.transpose() * S.block(1, 1, nx, nx) * AB;
      G.block(1, 1, nz, nz) += D;

      auto reg = regularize<Scalar>(G, opts.lambda);
      if (reg.shift > 0)
        r.log.push_back({k, n, static_cast<double>(reg.min_eig), static_cast<double>(reg.shift)});
      gammas[n] = std::move(reg.matrix);
      if (opts.capture_intermediates) {
        vb.gamma[n][k] = gammas[n];
        vb.D[n][k] = std::move(D);
      }
    }

    auto game = solve_stage_game<Scalar>(gammas, input_dims, nx, k);
    L.block(1 + nx, 0, nu, 1) = game.s;
    L.block(1 + nx, 1, nu, nx) = game.K;

    for (int n = 0; n < N; ++n) {
      const Matrix<Scalar> GL = gammas[n] * L;
      if (opts.propagation == ValuePropagation::feedback) {
        vb.S[n][k] = L.transpose() * GL;
      } else {
        // Own-rows-only left factor: other players' inputs are not re-optimized by n.
        const int o = offsets[n], d = input_dims[n];
        Matrix<Scalar> Sn = GL.topRows(1 + nx);
        Sn.noalias() += L.block(1 + nx + o, 0, d, 1 + nx).transpose() * GL.middleRows(1 + nx + o, d);
        vb.S[n][k] = std::move(Sn);
      }
      if (newton)
        vb.omega[n][k] = sd.M[n].block(0, 1, 1, nx) + vb.omega[n][k + 1] * sd.A;
    }

    r.policy.gains[k] = std::move(game.K);
    r.policy.offsets[k] = std::move(game.s);
    vb.F[k] = std::move(game.F);
    vb.P[k] = std::move(game.P);
    vb.H[k] = std::move(game.H);
  }
  return r;
}

}  // namespace detail

/// Stagewise Newton recursion: the second-order dynamics term is weighted by the costate.
template <typename Scalar>
BackwardResult<Scalar> newton_backward(const std::vector<StageDerivatives<Scalar>>& stages,
                                       const TerminalDerivatives<Scalar>& terminal,
                                       const std::vector<int>& input_dims,
                                       const BackwardOptions<Scalar>& opts = {}) {
  return detail::backward_pass(Method::newton, stages, terminal, input_dims, opts);
}

/// Game DDP recursion: the second-order dynamics term is weighted by the propagated value
/// gradient instead of the costate.
template <typename Scalar>
BackwardResult<Scalar> ddp_backward(const std::vector<StageDerivatives<Scalar>>& stages,
                                    const TerminalDerivatives<Scalar>& terminal,
                                    const std::vector<int>& input_dims,
                                    const BackwardOptions<Scalar>& opts = {}) {
  return detail::backward_pass(Method::ddp, stages, terminal, input_dims, opts);
}

template <typename Scalar>
BackwardResult<Scalar> backward(Method method, const std::vector<StageDerivatives<Scalar>>& stages,
                                const TerminalDerivatives<Scalar>& terminal,
                                const std::vector<int>& input_dims,
                                const BackwardOptions<Scalar>& opts = {}) {
  return detail::backward_pass(method, stages, terminal, input_dims, opts);
}

}  // namespace dyngame
