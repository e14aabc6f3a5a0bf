#include "test_support.hpp"

namespace dyngame::testing {
namespace {

TEST(Regularize, IdentityIsLiftedToLambda) {
  const auto r = regularize<double>(Mat::Identity(3, 3), 30.0);
  EXPECT_TRUE(r.matrix.isApprox(30.0 * Mat::Identity(3, 3)));
  EXPECT_DOUBLE_EQ(r.shift, 29.0);
}

TEST(Regularize, WellConditionedIsUnchanged) {
  const Mat g = 12.0 * Mat::Identity(2, 2) + Mat::Constant(2, 2, 1.0);  // min eig 12
  const auto r = regularize<double>(g, 10.0);
  EXPECT_EQ(r.matrix, g);
  EXPECT_EQ(r.shift, 0.0);
  EXPECT_NEAR(r.min_eig, 12.0, 1e-12);
}

TEST(Regularize, IndefiniteDiagonal) {
  const Mat g = vec({-1.0, 5.0}).asDiagonal();
  const auto r = regularize<double>(g, 1.0);
  EXPECT_TRUE(r.matrix.isApprox(Mat(vec({1.0, 7.0}).asDiagonal())));
  EXPECT_DOUBLE_EQ(r.shift, 2.0);
}

TEST(Regularize, ZeroLambdaIsANoOp) {
  const Mat g = vec({-4.0, 1.0}).asDiagonal();
  const auto r = regularize<double>(g, 0.0);
  EXPECT_EQ(r.matrix, g);
  EXPECT_EQ(r.shift, 0.0);
}

TEST(Regularize, ShiftUsesSymmetricPart) {
  Mat g(2, 2);
  g << 1, 4, 0, 1;  // symmetric part has eigenvalues -1 and 3
  const auto r = regularize<double>(g, 1.0);
  EXPECT_NEAR(r.shift, 2.0, 1e-12);
  EXPECT_NEAR(r.matrix(0, 1), 4.0, 0.0);
}

TEST(Regularize, PropertyShiftFormula) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 50; ++trial) {
    Mat g(4, 4);
    for (auto& v : g.reshaped()) v = normal(rng);
    g = (g + g.transpose()).eval();
    const double lambda = 0.5 + (trial % 5);
    const auto r = regularize<double>(g, lambda);
    Eigen::SelfAdjointEigenSolver<Mat> eig(g);
    const double e = eig.eigenvalues().minCoeff();
    EXPECT_NEAR(r.shift, std::max(0.0, lambda - e), 1e-10);
    Eigen::SelfAdjointEigenSolver<Mat> after(r.matrix);
    EXPECT_GE(after.eigenvalues().minCoeff(), lambda - 1e-10);
  }
}

// Two players, scalar state, scalar inputs; rows [1 | x | u0 u1].
std::vector<Mat> two_player_gammas(const Mat& F, const Vec& H, const Mat& P) {
  std::vector<Mat> g(2, Mat::Zero(4, 4));
  for (int n = 0; n < 2; ++n) {
    g[n](2 + n, 0) = H[n];
    g[n](2 + n, 1) = P(n, 0);
    g[n].block(2 + n, 2, 1, 2) = F.row(n);
  }
  return g;
}

TEST(StageGame, HandSolvedTwoByTwo) {
  Mat F(2, 2);
  F << 2, 1, 1, 2;
  const auto g = solve_stage_game(two_player_gammas(F, vec({2, 2}), Mat::Zero(2, 1)), {1, 1}, 1);
  EXPECT_NEAR(g.s[0], -2.0 / 3.0, 1e-15);
  EXPECT_NEAR(g.s[1], -2.0 / 3.0, 1e-15);
  EXPECT_TRUE(g.K.isZero());
  EXPECT_EQ(g.F, F);
}

TEST(StageGame, ZeroRightHandSides) {
  Mat F(2, 2);
  F << 3, -1, 0.5, 2;
  const auto g = solve_stage_game(two_player_gammas(F, vec({0, 0}), Mat::Zero(2, 1)), {1, 1}, 1);
  EXPECT_TRUE(g.s.isZero());
  EXPECT_TRUE(g.K.isZero());
}

TEST(StageGame, SingularCarriesStageAndCondition) {
  Mat F(2, 2);
  F << 1, 1, 1, 1;
  try {
    solve_stage_game(two_player_gammas(F, vec({1, 1}), Mat::Zero(2, 1)), {1, 1}, 1, 7);
    FAIL() << "expected a stage game error";
  } catch (const StageGameError& e) {
    EXPECT_EQ(e.stage(), 7);
    EXPECT_LT(e.rcond(), 1e-12);
  }
}

struct Bundles {
  Trajectory<double> traj;
  std::vector<StageDerivatives<double>> stages;
  TerminalDerivatives<double> terminal;
};

Bundles bundles(const Problem& p, const Vec& x0, const Seq& u) {
  Bundles b;
  b.traj = rollout(p, x0, u);
  b.stages = differentiate_trajectory(p, b.traj);
  b.terminal = differentiate_terminal(p, b.traj.states.back());
  return b;
}

TEST(NewtonBackward, ScalarExampleByHand) {
  const auto p = scalar_example(1);
  const auto b = bundles(p, vec({1.0}), scalars({0.0}));
  BackwardOptions<double> opts;
  opts.capture_intermediates = true;
  const auto r = newton_backward(b.stages, b.terminal, p.input_dims(), opts);
  EXPECT_TRUE(r.values.S[0][1].isApprox(Mat::Constant(2, 2, 2.0)));
  const Mat& G = r.values.gamma[0][0];
  EXPECT_DOUBLE_EQ(G(0, 0), 4.0);
  EXPECT_DOUBLE_EQ(G(0, 2), 2.0);
  EXPECT_DOUBLE_EQ(G(2, 2), 4.0);
  EXPECT_DOUBLE_EQ(G(2, 1), 2.0);
  EXPECT_DOUBLE_EQ(r.policy.offsets[0][0], -0.5);
  EXPECT_DOUBLE_EQ(r.policy.gains[0](0, 0), -0.5);
  EXPECT_TRUE(r.log.empty());
}

TEST(DdpBackward, ScalarExampleMatchesNewton) {
  const auto p = scalar_example(1);
  const auto b = bundles(p, vec({1.0}), scalars({0.0}));
  const auto n = newton_backward(b.stages, b.terminal, p.input_dims());
  const auto d = ddp_backward(b.stages, b.terminal, p.input_dims());
  EXPECT_EQ(n.policy.offsets[0], d.policy.offsets[0]);
  EXPECT_EQ(n.policy.gains[0], d.policy.gains[0]);
}

TEST(DdpBackward, LqGameIdenticalToNewton) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto p = catalog::random_lq_game(seed, 2, 3, {2, 1}, 8);
    const auto b = bundles(p, catalog::random_x0(seed, 3), random_controls(p, seed, 0.5));
    const auto n = newton_backward(b.stages, b.terminal, p.input_dims());
    const auto d = ddp_backward(b.stages, b.terminal, p.input_dims());
    for (int k = 0; k < p.horizon(); ++k) {
      EXPECT_LE((n.policy.offsets[k] - d.policy.offsets[k]).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LE((n.policy.gains[k] - d.policy.gains[k]).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Backward, RegularizationShiftsFullGammaAndIsLogged) {
  const auto p = scalar_example(2);
  const auto b = bundles(p, vec({1.0}), scalars({0.0, 0.0}));
  BackwardOptions<double> opts;
  opts.lambda = 30.0;
  opts.capture_intermediates = true;
  const auto plain = newton_backward(b.stages, b.terminal, p.input_dims());
  BackwardOptions<double> cap;
  cap.capture_intermediates = true;
  const auto raw = newton_backward(b.stages, b.terminal, p.input_dims(), cap);
  const auto reg = newton_backward(b.stages, b.terminal, p.input_dims(), opts);
  ASSERT_EQ(reg.log.size(), 2u);
  const auto& ev = reg.log.back();
  EXPECT_EQ(ev.stage, 0);
  EXPECT_EQ(ev.player, 0);
  // Stage 1 sees the unregularized terminal value, so its Gamma shifts by exactly the logged amount.
  const Mat diff = reg.values.gamma[0][1] - raw.values.gamma[0][1];
  EXPECT_TRUE(diff.isApprox(reg.log.front().shift * Mat::Identity(3, 3)));
  // The shifted 11 entry reaches the propagated value.
  EXPECT_GT(reg.values.S[0][1](0, 0), plain.values.S[0][1](0, 0));
}

TEST(Backward, SingularStageGameRaises) {
  const Problem p(3, 1, {1}, scalar_dynamics(linear_scalar(1, 0)), {quadratic_stage(1, 0)},
                  {quadratic_terminal(1)});
  const auto b = bundles(p, vec({1.0}), scalars({0, 0, 0}));
  try {
    newton_backward(b.stages, b.terminal, p.input_dims());
    FAIL() << "expected a stage game error";
  } catch (const StageGameError& e) {
    EXPECT_EQ(e.stage(), 2);
  }
}

TEST(Backward, FeedbackPropagationAgreesForOnePlayer) {
  const auto p = catalog::random_smooth_game(3, 1, 3, {2}, 6);
  const auto b = bundles(p, catalog::random_x0(3, 3), random_controls(p, 2, 0.3));
  for (Method m : {Method::newton, Method::ddp}) {
    BackwardOptions<double> fb;
    fb.propagation = ValuePropagation::feedback;
    const auto a = backward(m, b.stages, b.terminal, p.input_dims());
    const auto c = backward(m, b.stages, b.terminal, p.input_dims(), fb);
    for (int k = 0; k < p.horizon(); ++k) {
      EXPECT_LE((a.policy.offsets[k] - c.policy.offsets[k]).cwiseAbs().maxCoeff(), 1e-10);
      EXPECT_LE((a.policy.gains[k] - c.policy.gains[k]).cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

TEST(Backward, FeedbackValuesAreSymmetric) {
  const auto inst = catalog::make_instance("owner-dog");
  const auto b = bundles(inst.problem, inst.x0, random_controls(inst.problem, 4, 0.3));
  BackwardOptions<double> fb;
  fb.propagation = ValuePropagation::feedback;
  const auto r = ddp_backward(b.stages, b.terminal, inst.problem.input_dims(), fb);
  for (const auto& per : r.values.S)
    for (const auto& S : per) EXPECT_LE((S - S.transpose()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Backward, OmegaIsTheCostToGoStateGradient) {
  const auto inst = catalog::make_instance("owner-dog");
  const auto& p = inst.problem;
  const auto b = bundles(p, inst.x0, random_controls(p, 8, 0.4));
  const auto r = newton_backward(b.stages, b.terminal, p.input_dims());
  for (int n = 0; n < 2; ++n)
    for (int k : {0, 4, 9, 10}) {
      const RowVector<double> fd = fd_cost_to_go_state_gradient(p, b.traj, n, k);
      EXPECT_LE((r.values.omega[n][k] - fd).cwiseAbs().maxCoeff(),
                std::max(1e-5, 1e-3 * fd.cwiseAbs().maxCoeff()))
          << "n=" << n << " k=" << k;
    }
}

class Closeness : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    inst_ = new catalog::Instance(catalog::make_instance("owner-dog"));
    star_ = new SolveReport<double>(owner_dog_equilibrium(inst_->problem, inst_->x0));
  }
  static void TearDownTestSuite() {
    delete star_;
    delete inst_;
  }
  static catalog::Instance* inst_;
  static SolveReport<double>* star_;
};
catalog::Instance* Closeness::inst_ = nullptr;
SolveReport<double>* Closeness::star_ = nullptr;

TEST_F(Closeness, MatrixAndUpdateSlopes) {
  ASSERT_EQ(star_->termination, Termination::residual_tol);
  const auto& p = inst_->problem;
  const Seq dir = random_direction(p, 21);
  std::vector<double> eps, dgamma, dH, ds, dK;
  BackwardOptions<double> opts;
  opts.capture_intermediates = true;
  for (double e : {1e-1, 1e-2, 1e-3}) {
    const auto b = bundles(p, inst_->x0, offset(star_->trajectory.controls, dir, e));
    const auto n = newton_backward(b.stages, b.terminal, p.input_dims(), opts);
    const auto d = ddp_backward(b.stages, b.terminal, p.input_dims(), opts);
    double g = 0, h = 0, s = 0, K = 0;
    for (int k = 0; k < p.horizon(); ++k) {
      for (int pl = 0; pl < 2; ++pl)
        g = std::max(g, (n.values.gamma[pl][k] - d.values.gamma[pl][k]).norm());
      h = std::max(h, (n.values.H[k] - d.values.H[k]).norm());
      s = std::max(s, (n.policy.offsets[k] - d.policy.offsets[k]).norm());
      K = std::max(K, (n.policy.gains[k] - d.policy.gains[k]).norm());
    }
    eps.push_back(e);
    dgamma.push_back(g);
    dH.push_back(h);
    ds.push_back(s);
    dK.push_back(K);
  }
  EXPECT_GE(loglog_slope(eps, dgamma), 0.9);
  EXPECT_GE(loglog_slope(eps, dK), 0.9);
  EXPECT_GE(loglog_slope(eps, dH), 1.8);
  EXPECT_GE(loglog_slope(eps, ds), 1.8);
}

TEST_F(Closeness, WrongSignCorrectionBreaksTheSlope) {
  const auto& p = inst_->problem;
  const Seq dir = random_direction(p, 21);
  std::vector<double> eps, gap;
  BackwardOptions<double> flipped;
  flipped.correction_sign = -1.0;
  for (double e : {1e-1, 1e-2, 1e-3}) {
    const auto b = bundles(p, inst_->x0, offset(star_->trajectory.controls, dir, e));
    const auto n = newton_backward(b.stages, b.terminal, p.input_dims());
    const auto d = ddp_backward(b.stages, b.terminal, p.input_dims(), flipped);
    double s = 0;
    for (int k = 0; k < p.horizon(); ++k)
      s = std::max(s, (n.policy.offsets[k] - d.policy.offsets[k]).norm());
    eps.push_back(e);
    gap.push_back(s);
  }
  EXPECT_LT(loglog_slope(eps, gap), 1.5);
}

}  // namespace
}  // namespace dyngame::testing
