#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace dyngame {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// A per-stage sequence of vectors (states x_0..x_T or controls u_0..u_{T-1}).
template <typename Scalar>
using VectorSequence = std::vector<Vector<Scalar>>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Failure tied to one stage of the horizon (non-finite rollout, supplier failure).
class StageError : public Error {
 public:
  StageError(int stage, const std::string& what)
      : Error("stage " + std::to_string(stage) + ": " + what), stage_(stage) {}

  int stage() const noexcept { return stage_; }

 private:
  int stage_;
};

/// The stacked own-input block F_k of a stage game could not be inverted.
class StageGameError : public StageError {
 public:
  StageGameError(int stage, double rcond)
      : StageError(stage, "stage game unsolvable at k=" + std::to_string(stage) +
                              " (reciprocal condition estimate " + std::to_string(rcond) + ")"),
        rcond_(rcond) {}

  double rcond() const noexcept { return rcond_; }

 private:
  double rcond_;
};

class OracleError : public Error {
 public:
  using Error::Error;
};

namespace detail {

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

template <typename Scalar>
Scalar inf_norm(const VectorSequence<Scalar>& seq) {
  Scalar out = 0;
  for (const auto& v : seq) {
    if (v.size() > 0) out = std::max(out, v.cwiseAbs().maxCoeff());
  }
  return out;
}

inline void require(bool cond, const std::string& what) {
  if (!cond) throw DimensionError(what);
}

}  // namespace detail

}  // namespace dyngame
