#include "test_support.hpp"

namespace dyngame::testing {
namespace {

TEST(Rollout, ScalarIntegratorAccumulatesInputs) {
  const auto p = scalar_example(2);
  const auto tr = rollout(p, vec({0.0}), scalars({1.0, 1.0}));
  ASSERT_EQ(tr.states.size(), 3u);
  EXPECT_EQ(tr.states[0][0], 0.0);
  EXPECT_EQ(tr.states[1][0], 1.0);
  EXPECT_EQ(tr.states[2][0], 2.0);
}

TEST(Rollout, DoublingDynamics) {
  const Problem p(2, 1, {1}, scalar_dynamics(linear_scalar(2, 1)), {quadratic_stage(1, 1)},
                  {quadratic_terminal(1)});
  const auto tr = rollout(p, vec({1.0}), scalars({0.0, 0.0}));
  EXPECT_EQ(tr.states[1][0], 2.0);
  EXPECT_EQ(tr.states[2][0], 4.0);
}

TEST(Rollout, OwnerDogZeroInputStaysPut) {
  const auto inst = catalog::make_instance("owner-dog");
  const auto tr = rollout(inst.problem, inst.x0, inst.u0);
  for (const auto& x : tr.states) {
    EXPECT_EQ(x[0], -1.0);
    EXPECT_EQ(x[1], 2.0);
  }
}

TEST(Rollout, RejectsDimensionMismatch) {
  const auto p = scalar_example(2);
  EXPECT_THROW(rollout(p, vec({0.0, 1.0}), scalars({1.0, 1.0})), DimensionError);
  EXPECT_THROW(rollout(p, vec({0.0}), scalars({1.0})), DimensionError);
  Seq bad = scalars({1.0, 1.0});
  bad[1] = vec({1.0, 2.0});
  EXPECT_THROW(rollout(p, vec({0.0}), bad), DimensionError);
}

TEST(Rollout, NonFiniteStateNamesTheStage) {
  ScalarDynamics blowup = linear_scalar(1e200, 0);
  const Problem p(4, 1, {1}, scalar_dynamics(blowup), {quadratic_stage(1, 1)},
                  {quadratic_terminal(1)});
  try {
    rollout(p, vec({1.0}), scalars({0, 0, 0, 0}));
    FAIL() << "expected a stage error";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), 2);
  }
}

TEST(TotalCost, QuadraticAtOriginIsZero) {
  const auto p = scalar_example(3);
  const auto tr = rollout(p, vec({0.0}), scalars({0, 0, 0}));
  EXPECT_EQ(total_cost(p, tr).totals[0], 0.0);
}

TEST(TotalCost, SingleStage) {
  const Problem p(1, 1, {1}, scalar_dynamics(linear_scalar(1, 1)), {quadratic_stage(1, 1)},
                  {quadratic_terminal(0)});
  const auto tr = rollout(p, vec({1.0}), scalars({1.0}));
  EXPECT_DOUBLE_EQ(total_cost(p, tr).totals[0], 2.0);
}

TEST(TotalCost, OwnerDogNominal) {
  const auto inst = catalog::make_instance("owner-dog");
  const auto c = total_cost(inst.problem, rollout(inst.problem, inst.x0, inst.u0));
  EXPECT_NEAR(c.totals[0], 108.02151690416993, 1e-10);
  EXPECT_NEAR(c.totals[1], 10.891473591180159, 1e-10);
  EXPECT_EQ(c.per_stage.cols(), 11);
}

TEST(TotalCost, RejectsMismatchedTrajectory) {
  const auto p = scalar_example(2);
  auto tr = rollout(p, vec({0.0}), scalars({1.0, 1.0}));
  tr.states.pop_back();
  EXPECT_THROW(total_cost(p, tr), DimensionError);
}

TEST(Properties, RolloutIsIdempotentOnItsControls) {
  for (const std::string name : {"owner-dog", "planar-robots", "random-smooth"}) {
    const auto inst = catalog::make_instance(name);
    const auto u = random_controls(inst.problem, 11, 0.7);
    const auto a = rollout(inst.problem, inst.x0, u);
    const auto b = rollout(inst.problem, a.states.front(), a.controls);
    for (std::size_t k = 0; k < a.states.size(); ++k) EXPECT_EQ(a.states[k], b.states[k]) << name;
  }
}

TEST(Properties, CostIsAdditiveOverStages) {
  for (const std::string name : {"owner-dog", "planar-robots", "random-lq"}) {
    const auto inst = catalog::make_instance(name);
    const auto tr = rollout(inst.problem, inst.x0, random_controls(inst.problem, 5, 0.4));
    const int T = inst.problem.horizon();
    const Vec full = total_cost(inst.problem, tr).totals;
    for (int t : {0, 1, T / 2, T}) {
      const Vec split = stage_range_cost(inst.problem, tr, 0, t) +
                        stage_range_cost(inst.problem, tr, t, T + 1);
      EXPECT_LE((split - full).cwiseAbs().maxCoeff(), 1e-9 * (1 + full.cwiseAbs().maxCoeff()))
          << name << " t=" << t;
    }
  }
}

std::vector<ProbePoint<double>> probes_for(const Problem& p, std::uint64_t seed, int count) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.8);
  std::vector<ProbePoint<double>> out;
  for (int i = 0; i < count; ++i) {
    ProbePoint<double> pt{i % (p.horizon() + 1), Vec(p.state_dim()), Vec(p.input_dim())};
    for (auto& v : pt.x.reshaped()) v = normal(rng);
    for (auto& v : pt.u.reshaped()) v = normal(rng);
    out.push_back(pt);
  }
  return out;
}

TEST(Validate, WellFormedLqGameIsClean) {
  const auto p = catalog::random_lq_game(3, 2, 3, {1, 2}, 4);
  EXPECT_TRUE(validate(p).empty());
  EXPECT_TRUE(validate(p, probes_for(p, 1, 10)).empty());
}

TEST(Validate, WrongDynamicsDimensionNamesTheStage) {
  Dynamics<double> d = scalar_dynamics(linear_scalar(1, 1));
  d.value = [](int k, const Vec& x, const Vec& u) -> Vec {
    if (k == 2) return vec({x[0] + u[0], 0.0});
    return vec({x[0] + u[0]});
  };
  const Problem p(4, 1, {1}, d, {quadratic_stage(1, 1)}, {quadratic_terminal(1)});
  const auto diags = validate(p);
  ASSERT_EQ(diags.size(), 1u);
  EXPECT_EQ(diags[0].kind, Diagnostic::Kind::dimension);
  EXPECT_EQ(diags[0].where, "f_2");
}

TEST(Validate, CostDerivativeOffByTwoIsReported) {
  auto cost = quadratic_stage(1, 1);
  auto exact = cost.derivatives;
  cost.derivatives = [exact](int k, const Vec& x, const Vec& u) {
    auto d = exact(k, x, u);
    d.gradient *= 2;
    return d;
  };
  const Problem p(2, 1, {1}, scalar_dynamics(linear_scalar(1, 1)), {cost},
                  {quadratic_terminal(1)});
  const auto diags = validate(p, {{0, vec({1.0}), vec({0.5})}});
  ASSERT_EQ(diags.size(), 1u);
  EXPECT_EQ(diags[0].kind, Diagnostic::Kind::derivative_mismatch);
  EXPECT_EQ(diags[0].where, "c_0,0");
  EXPECT_NEAR(diags[0].relative_error, 1.0, 1e-6);
}

TEST(Validate, SupplierFailureBecomesDiagnostic) {
  auto cost = quadratic_stage(1, 1);
  cost.derivatives = [](int, const Vec&, const Vec&) -> CostDerivatives<double> {
    throw std::runtime_error("boom");
  };
  const Problem p(1, 1, {1}, scalar_dynamics(linear_scalar(1, 1)), {cost},
                  {quadratic_terminal(1)});
  const auto diags = validate(p);
  ASSERT_EQ(diags.size(), 1u);
  EXPECT_EQ(diags[0].kind, Diagnostic::Kind::evaluation);
}

TEST(GameProblem, RejectsInconsistentConstruction) {
  EXPECT_THROW(Problem(0, 1, {1}, scalar_dynamics(linear_scalar(1, 1)), {quadratic_stage(1, 1)},
                       {quadratic_terminal(1)}),
               DimensionError);
  EXPECT_THROW(Problem(1, 1, {1, 1}, scalar_dynamics(linear_scalar(1, 1)),
                       {quadratic_stage(1, 1)}, {quadratic_terminal(1)}),
               DimensionError);
  const auto p = catalog::random_lq_game(1, 3, 2, {1, 2, 3}, 2);
  EXPECT_EQ(p.input_dim(), 6);
  EXPECT_EQ(p.input_offset(2), 3);
}

}  // namespace
}  // namespace dyngame::testing
