#pragma once

#include <dyngame/derivatives.hpp>

#include <sstream>
#include <string>
#include <vector>

namespace dyngame {

struct Diagnostic {
  enum class Kind { dimension, derivative_mismatch, evaluation };
  Kind kind;
  std::string where;  // "f_3", "c_1,0", "c_0,T"
  std::string message;
  double relative_error = 0.0;
};

/// A point at which suppliers are evaluated; k == T probes the terminal costs.
template <typename Scalar>
struct ProbePoint {
  int k;
  Vector<Scalar> x;
  Vector<Scalar> u;
};

namespace detail {

template <typename Scalar>
void compare_block(std::vector<Diagnostic>& out, const std::string& where, const std::string& block,
                   const Matrix<Scalar>& analytic, const Matrix<Scalar>& fd) {
  if (fd.size() == 0) return;
  const double diff = static_cast<double>((analytic - fd).cwiseAbs().maxCoeff());
  const double scale = static_cast<double>(fd.cwiseAbs().maxCoeff());
  if (diff > 1e-5 + 1e-3 * scale) {
    const double rel = diff / std::max(scale, 1e-300);
    std::ostringstream msg;
    msg << block << " disagrees with central differences (relative error " << rel << ")";
    out.push_back({Diagnostic::Kind::derivative_mismatch, where, msg.str(), rel});
  }
}

// Compares the [value | gradient | Hessian] parts of one cost block.
template <typename Scalar>
void compare_cost_block(std::vector<Diagnostic>& out, const std::string& where,
                        const Matrix<Scalar>& analytic, const Matrix<Scalar>& fd) {
  const auto m = fd.rows() - 1;
  compare_block<Scalar>(out, where, "value", analytic.topLeftCorner(1, 1), fd.topLeftCorner(1, 1));
  compare_block<Scalar>(out, where, "gradient", analytic.block(1, 0, m, 1), fd.block(1, 0, m, 1));
  compare_block<Scalar>(out, where, "hessian", analytic.bottomRightCorner(m, m),
                        fd.bottomRightCorner(m, m));
}

}  // namespace detail

/// Reports dimension inconsistencies at every probe and, when fd_check is set, supplied
/// derivatives that disagree with central differences of the value maps by more than
/// 1e-5 + 1e-3 * |block|. Supplier exceptions become evaluation diagnostics.
template <typename Scalar>
std::vector<Diagnostic> validate(const GameProblem<Scalar>& problem,
                                 const std::vector<ProbePoint<Scalar>>& probes,
                                 bool fd_check = true, Scalar h = Scalar(1e-5)) {
  std::vector<Diagnostic> out;
  const int nx = problem.state_dim();
  const int nu = problem.input_dim();
  const int nz = nx + nu;
  const int T = problem.horizon();
  auto evaluation = [&](const std::string& where, const std::exception& e) {
    out.push_back({Diagnostic::Kind::evaluation, where, e.what()});
  };

  for (const auto& p : probes) {
    const std::string ks = std::to_string(p.k);
    if (p.x.size() != nx || (p.k < T && p.u.size() != nu)) {
      out.push_back({Diagnostic::Kind::dimension, "probe@" + ks, "probe point has wrong dimension"});
      continue;
    }
    if (p.k >= T) {
      std::vector<Matrix<Scalar>> analytic;
      bool ok = true;
      for (int n = 0; n < problem.num_players(); ++n) {
        const std::string where = "c_" + std::to_string(n) + ",T";
        try {
          auto d = problem.terminal_cost(n).derivatives(p.x);
          if (d.gradient.size() != nx || d.hessian.rows() != nx || d.hessian.cols() != nx) {
            out.push_back({Diagnostic::Kind::dimension, where, "terminal derivative shape"});
            ok = false;
          } else {
            analytic.push_back(detail::cost_block(d));
          }
        } catch (const std::exception& e) {
          evaluation(where, e);
          ok = false;
        }
      }
      if (!fd_check || !ok) continue;
      try {
        const auto fd = fd_terminal_oracle(problem, p.x, h);
        for (int n = 0; n < problem.num_players(); ++n)
          detail::compare_cost_block<Scalar>(out, "c_" + std::to_string(n) + ",T", analytic[n],
                                             fd.V[n]);
      } catch (const std::exception& e) {
        evaluation("c_T", e);
      }
      continue;
    }

    const std::string fwhere = "f_" + ks;
    bool ok = true;
    DynamicsDerivatives<Scalar> dyn;
    try {
      const Vector<Scalar> f0 = problem.dynamics().value(p.k, p.x, p.u);
      if (f0.size() != nx) {
        out.push_back({Diagnostic::Kind::dimension, fwhere,
                       fwhere + " returns dimension " + std::to_string(f0.size()) +
                           ", expected " + std::to_string(nx)});
        ok = false;
      } else {
        dyn = problem.dynamics().derivatives(p.k, p.x, p.u);
        bool shapes = dyn.A.rows() == nx && dyn.A.cols() == nx && dyn.B.rows() == nx &&
                      dyn.B.cols() == nu && static_cast<int>(dyn.G.size()) == nx;
        for (const auto& g : dyn.G) shapes = shapes && g.rows() == nz && g.cols() == nz;
        if (!shapes) {
          out.push_back({Diagnostic::Kind::dimension, fwhere,
                         "derivative supplier of " + fwhere + " returns wrong shapes"});
          ok = false;
        }
      }
    } catch (const std::exception& e) {
      evaluation(fwhere, e);
      ok = false;
    }

    std::vector<Matrix<Scalar>> costs;
    for (int n = 0; n < problem.num_players(); ++n) {
      const std::string where = "c_" + std::to_string(n) + "," + ks;
      try {
        auto d = problem.stage_cost(n).derivatives(p.k, p.x, p.u);
        if (d.gradient.size() != nz || d.hessian.rows() != nz || d.hessian.cols() != nz) {
          out.push_back({Diagnostic::Kind::dimension, where, "stage cost derivative shape"});
          ok = false;
        } else {
          costs.push_back(detail::cost_block(d));
        }
      } catch (const std::exception& e) {
        evaluation(where, e);
        ok = false;
      }
    }
    if (!fd_check || !ok) continue;
    try {
      const auto fd = fd_stage_oracle(problem, p.k, p.x, p.u, h);
      detail::compare_block<Scalar>(out, fwhere, "A", dyn.A, fd.A);
      detail::compare_block<Scalar>(out, fwhere, "B", dyn.B, fd.B);
      for (int l = 0; l < nx; ++l)
        detail::compare_block<Scalar>(out, fwhere, "G^" + std::to_string(l), dyn.G[l], fd.G[l]);
      for (int n = 0; n < problem.num_players(); ++n)
        detail::compare_cost_block<Scalar>(out, "c_" + std::to_string(n) + "," + ks, costs[n],
                                           fd.M[n]);
    } catch (const std::exception& e) {
      evaluation(fwhere, e);
    }
  }
  return out;
}

/// Structural check only: every supplier is evaluated once at the origin of each stage.
template <typename Scalar>
std::vector<Diagnostic> validate(const GameProblem<Scalar>& problem) {
  std::vector<ProbePoint<Scalar>> probes;
  for (int k = 0; k <= problem.horizon(); ++k)
    probes.push_back({k, Vector<Scalar>::Zero(problem.state_dim()),
                      Vector<Scalar>::Zero(problem.input_dim())});
  return validate(problem, probes, false);
}

}  // namespace dyngame
