#pragma once

#include <dyngame/game_model.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace dyngame::catalog {

using Problem = GameProblem<double>;
using Vec = Vector<double>;
using Seq = VectorSequence<double>;

struct OwnerDogParams {
  int horizon = 10;
  double x0_owner = -1.0;
  double x0_dog = 2.0;
  double terminal_weight = 100.0;
  double dog_weight = 40.0;
};

/// 1-D owner and dog. The owner wants to reach 1 while keeping the dog at 2, the dog only
/// wants to be near the owner. x_{n,k+1} = x_{n,k} + tanh(u_{n,k}).
Problem owner_dog(const OwnerDogParams& p = {});

struct PlanarParams {
  int horizon = 119;
  double dt = 0.04;
  double alpha = 10.0;
  double beta = 3.0;
  double radius = 0.25;
  std::vector<Vec> goals;  // empty: the three default targets
};

/// Three disc robots on a plane with saturated velocity inputs, each steering to its own goal
/// while paying a log-barrier on pairwise clearance.
Problem planar_robots(const PlanarParams& p = {});
Vec planar_default_x0();
std::vector<Vec> planar_default_goals();

/// Clearance-based avoidance penalty for one pair: -log(1 - exp(-max(c, 0.01))).
double avoidance_penalty(double clearance);

struct PushPullParams {
  double pull_gain = 1.0;  // input proportional to the offset to the goal
  double push_gain = 0.3;  // input inversely proportional to squared distance
};

/// Naive feedback initializer: attraction to the goal plus inverse-square repulsion,
/// simulated through the dynamics to produce an open-loop control sequence.
Seq planar_push_pull(const PlanarParams& p, const Vec& x0, const PushPullParams& pp = {});

/// Smallest pairwise clearance ||p_i - p_j|| - r_i - r_j over the whole state sequence.
double min_clearance(const Seq& states, double radius);

/// Linear dynamics with spectral radius at most 1.2, quadratic costs whose own-input Hessian
/// blocks have minimum eigenvalue >= 0.1, per-stage linear terms. Deterministic in seed.
Problem random_lq_game(std::uint64_t seed, int num_players, int state_dim,
                       const std::vector<int>& input_dims, int horizon);

/// f = A x + B u + a .* sin(C x + E u) with quadratic-plus-log-cosh costs.
Problem random_smooth_game(std::uint64_t seed, int num_players, int state_dim,
                           const std::vector<int>& input_dims, int horizon);

/// Deterministic initial state used with the random generators.
Vec random_x0(std::uint64_t seed, int state_dim);

struct ProblemSpecRecord {
  std::string name;
  std::string description;
  int horizon;
  Vec x0;
  double lambda;
  std::map<std::string, double> parameters;  // every overridable scalar with its default
};

struct Instance {
  ProblemSpecRecord record;
  Problem problem;
  Vec x0;
  Seq u0;
};

std::vector<std::string> problem_names();
std::vector<ProblemSpecRecord> list_problems();

/// Builds a registered problem with scalar overrides applied. Throws Error on an unknown
/// name (message lists the catalog) or an unknown override key.
Instance make_instance(const std::string& name, const std::map<std::string, double>& overrides = {},
                       std::uint64_t seed = 1);

}  // namespace dyngame::catalog
