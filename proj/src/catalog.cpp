#include <dyngame/catalog.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <sstream>

namespace dyngame::catalog {

namespace {

using Mat = Matrix<double>;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Zero-filled derivative containers over z = [x; u].
CostDerivatives<double> zero_cost(int nz) {
  return {0.0, Vec::Zero(nz), Mat::Zero(nz, nz)};
}

// x_{i} += scale * tanh(u_{i}) componentwise; shared by both catalog dynamics.
Dynamics<double> saturated_integrator(int n, double scale) {
  Dynamics<double> d;
  d.value = [scale](int, const Vec& x, const Vec& u) -> Vec {
    return x + scale * u.array().tanh().matrix();
  };
  d.derivatives = [n, scale](int, const Vec&, const Vec& u) {
    DynamicsDerivatives<double> out;
    out.A = Mat::Identity(n, n);
    out.B = Mat::Zero(n, n);
    out.G.assign(n, Mat::Zero(2 * n, 2 * n));
    for (int l = 0; l < n; ++l) {
      const double t = std::tanh(u[l]);
      out.B(l, l) = scale * (1 - t * t);
      out.G[l](n + l, n + l) = scale * (-2 * t * (1 - t * t));
    }
    return out;
  };
  return d;
}

// ---- owner-dog ------------------------------------------------------------

// w * sigmoid((a - 1)^2) and its first two derivatives in a.
void add_sigmoid_goal(CostDerivatives<double>& c, double a, double w) {
  const double q = (a - 1) * (a - 1);
  const double s = sigmoid(q);
  const double ds = s * (1 - s);
  const double dds = ds * (1 - 2 * s);
  c.value += w * s;
  c.gradient[0] += w * ds * 2 * (a - 1);
  c.hessian(0, 0) += w * (dds * 4 * q + ds * 2);
}

void add_dog_anchor(CostDerivatives<double>& c, double b, double w) {
  c.value += w * (b - 2) * (b - 2);
  c.gradient[1] += 2 * w * (b - 2);
  c.hessian(1, 1) += 2 * w;
}

void add_follow(CostDerivatives<double>& c, double a, double b) {
  const double t = std::tanh(a - b);
  const double h1 = 2 * t * (1 - t * t);
  const double h2 = 2 * (1 - t * t) * (1 - 3 * t * t);
  c.value += t * t;
  c.gradient[0] += h1;
  c.gradient[1] -= h1;
  c.hessian(0, 0) += h2;
  c.hessian(1, 1) += h2;
  c.hessian(0, 1) -= h2;
  c.hessian(1, 0) -= h2;
}

void add_input_energy(CostDerivatives<double>& c, int index, double u) {
  c.value += u * u;
  c.gradient[index] += 2 * u;
  c.hessian(index, index) += 2;
}

// ---- planar robots ----------------------------------------------------------

constexpr double kClearanceFloor = 0.01;

// Goal term alpha (1 - exp(-|p - g|^2)) for robot n.
void add_goal(CostDerivatives<double>& c, const Vec& x, int n, const Vec& g, double alpha) {
  const Eigen::Vector2d d = x.segment<2>(2 * n) - g;
  const double e = std::exp(-d.squaredNorm());
  c.value += alpha * (1 - e);
  c.gradient.segment<2>(2 * n) += alpha * e * 2 * d;
  c.hessian.block<2, 2>(2 * n, 2 * n) +=
      alpha * e * (2 * Eigen::Matrix2d::Identity() - 4 * d * d.transpose());
}

// beta * -log(1 - exp(-max(|p_n - p_i| - 2r, 0.01))) for the pair (n, i). On the clamped
// branch (including the kink itself) the term is constant.
void add_avoidance(CostDerivatives<double>& c, const Vec& x, int n, int i, double beta, double r) {
  const Eigen::Vector2d v = x.segment<2>(2 * n) - x.segment<2>(2 * i);
  const double dist = v.norm();
  const double clearance = dist - 2 * r;
  c.value += beta * avoidance_penalty(clearance);
  if (clearance <= kClearanceFloor) return;
  const double em1 = std::expm1(clearance);
  const double d1 = -1.0 / em1;                           // phi'(c)
  const double d2 = std::exp(clearance) / (em1 * em1);    // phi''(c)
  const Eigen::Vector2d e = v / dist;
  const Eigen::Matrix2d Hd = (Eigen::Matrix2d::Identity() - e * e.transpose()) / dist;
  const Eigen::Matrix2d block = beta * (d1 * Hd + d2 * e * e.transpose());
  c.gradient.segment<2>(2 * n) += beta * d1 * e;
  c.gradient.segment<2>(2 * i) -= beta * d1 * e;
  c.hessian.block<2, 2>(2 * n, 2 * n) += block;
  c.hessian.block<2, 2>(2 * i, 2 * i) += block;
  c.hessian.block<2, 2>(2 * n, 2 * i) -= block;
  c.hessian.block<2, 2>(2 * i, 2 * n) -= block;
}

// ---- random generators --------------------------------------------------------

struct Rng {
  explicit Rng(std::uint64_t seed) : gen(seed) {}
  double normal() { return dist(gen); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(gen); }
  Mat matrix(int r, int c, double scale) {
    Mat m(r, c);
    for (int j = 0; j < c; ++j)
      for (int i = 0; i < r; ++i) m(i, j) = scale * normal();
    return m;
  }
  Vec vector(int n, double scale) { return matrix(n, 1, scale); }
  std::mt19937_64 gen;
  std::normal_distribution<double> dist{0.0, 1.0};
  std::uniform_real_distribution<double> unit{0.0, 1.0};
};

Mat capped_spectral_radius(Mat A, double cap) {
  const double rho = Eigen::EigenSolver<Mat>(A, false).eigenvalues().cwiseAbs().maxCoeff();
  if (rho > cap) A *= cap / rho;
  return A;
}

// Positive semidefinite quadratic plus 0.1 I on the player's own-input block.
Mat player_hessian(Rng& rng, int nx, int nu, int offset, int d) {
  const int nz = nx + nu;
  const Mat W = rng.matrix(nz, nz, 1.0 / std::sqrt(nz));
  Mat Q = W * W.transpose();
  Q.block(nx + offset, nx + offset, d, d) += 0.1 * Mat::Identity(d, d);
  return Q;
}

void check_random_dims(int N, int nx, const std::vector<int>& input_dims, int T) {
  detail::require(N > 0 && nx > 0 && T > 0, "random game dimensions must be positive");
  detail::require(static_cast<int>(input_dims.size()) == N, "one input dimension per player");
}

std::vector<int> offsets_of(const std::vector<int>& dims) {
  std::vector<int> o(dims.size(), 0);
  for (std::size_t n = 1; n < dims.size(); ++n) o[n] = o[n - 1] + dims[n - 1];
  return o;
}

}  // namespace

double avoidance_penalty(double clearance) {
  return -std::log(-std::expm1(-std::max(clearance, kClearanceFloor)));
}

// ---------------------------------------------------------------------------

Problem owner_dog(const OwnerDogParams& p) {
  const double W = p.terminal_weight;
  const double w = p.dog_weight;
  StageCost<double> owner, dog;
  owner.derivatives = [w](int, const Vec& x, const Vec& u) {
    auto c = zero_cost(4);
    add_sigmoid_goal(c, x[0], 1.0);
    add_dog_anchor(c, x[1], w);
    add_input_energy(c, 2, u[0]);
    return c;
  };
  owner.value = [f = owner.derivatives](int k, const Vec& x, const Vec& u) {
    return f(k, x, u).value;
  };
  dog.derivatives = [](int, const Vec& x, const Vec& u) {
    auto c = zero_cost(4);
    add_follow(c, x[0], x[1]);
    add_input_energy(c, 3, u[1]);
    return c;
  };
  dog.value = [f = dog.derivatives](int k, const Vec& x, const Vec& u) { return f(k, x, u).value; };

  TerminalCost<double> owner_T, dog_T;
  owner_T.derivatives = [W, w](const Vec& x) {
    auto c = zero_cost(2);
    add_sigmoid_goal(c, x[0], W);
    add_dog_anchor(c, x[1], w);
    return c;
  };
  owner_T.value = [f = owner_T.derivatives](const Vec& x) { return f(x).value; };
  dog_T.derivatives = [](const Vec& x) {
    auto c = zero_cost(2);
    add_follow(c, x[0], x[1]);
    return c;
  };
  dog_T.value = [f = dog_T.derivatives](const Vec& x) { return f(x).value; };

  return Problem(p.horizon, 2, {1, 1}, saturated_integrator(2, 1.0), {owner, dog},
                 {owner_T, dog_T});
}

Vec planar_default_x0() {
  Vec x0(6);
  x0 << 1.96, 0.24, -0.72, 1.39, -0.49, -2.00;
  return x0;
}

std::vector<Vec> planar_default_goals() {
  return {Eigen::Vector2d(-1.0, 0.0), Eigen::Vector2d(0.5, -0.866), Eigen::Vector2d(0.5, 0.866)};
}

Problem planar_robots(const PlanarParams& p) {
  const auto goals = p.goals.empty() ? planar_default_goals() : p.goals;
  const int N = static_cast<int>(goals.size());
  const int nx = 2 * N;
  const int nz = 2 * nx;
  std::vector<StageCost<double>> stage;
  std::vector<TerminalCost<double>> terminal;
  for (int n = 0; n < N; ++n) {
    // State-only part shared by stage and terminal costs, over a z of size nzz.
    auto state_part = [n, g = goals[n], N, p](const Vec& x, int nzz) {
      auto c = zero_cost(nzz);
      add_goal(c, x, n, g, p.alpha);
      for (int i = 0; i < N; ++i)
        if (i != n) add_avoidance(c, x, n, i, p.beta, p.radius);
      return c;
    };
    StageCost<double> sc;
    sc.derivatives = [state_part, n, nx, nz](int, const Vec& x, const Vec& u) {
      auto c = state_part(x, nz);
      add_input_energy(c, nx + 2 * n, u[2 * n]);
      add_input_energy(c, nx + 2 * n + 1, u[2 * n + 1]);
      return c;
    };
    sc.value = [f = sc.derivatives](int k, const Vec& x, const Vec& u) { return f(k, x, u).value; };
    TerminalCost<double> tc;
    tc.derivatives = [state_part, nx](const Vec& x) { return state_part(x, nx); };
    tc.value = [f = tc.derivatives](const Vec& x) { return f(x).value; };
    stage.push_back(std::move(sc));
    terminal.push_back(std::move(tc));
  }
  return Problem(p.horizon, nx, std::vector<int>(N, 2), saturated_integrator(nx, p.dt),
                 std::move(stage), std::move(terminal));
}

Seq planar_push_pull(const PlanarParams& p, const Vec& x0, const PushPullParams& pp) {
  const auto goals = p.goals.empty() ? planar_default_goals() : p.goals;
  const int N = static_cast<int>(goals.size());
  Seq controls;
  controls.reserve(p.horizon);
  Vec x = x0;
  for (int k = 0; k < p.horizon; ++k) {
    Vec u(2 * N);
    for (int n = 0; n < N; ++n) {
      const Eigen::Vector2d pn = x.segment<2>(2 * n);
      Eigen::Vector2d un = pp.pull_gain * (goals[n] - pn);
      for (int i = 0; i < N; ++i) {
        if (i == n) continue;
        const Eigen::Vector2d v = pn - x.segment<2>(2 * i);
        const double d = std::max(v.norm(), 1e-6);
        un += pp.push_gain * v / (d * d * d);
      }
      u.segment<2>(2 * n) = un;
    }
    x += p.dt * u.array().tanh().matrix();
    controls.push_back(std::move(u));
  }
  return controls;
}

double min_clearance(const Seq& states, double radius) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& x : states) {
    const int N = static_cast<int>(x.size() / 2);
    for (int i = 0; i < N; ++i)
      for (int j = i + 1; j < N; ++j)
        best = std::min(best, (x.segment<2>(2 * i) - x.segment<2>(2 * j)).norm() - 2 * radius);
  }
  return best;
}

Vec random_x0(std::uint64_t seed, int state_dim) {
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  return rng.vector(state_dim, 1.0);
}

Problem random_lq_game(std::uint64_t seed, int N, int nx, const std::vector<int>& input_dims,
                       int T) {
  check_random_dims(N, nx, input_dims, T);
  Rng rng(seed);
  int nu = 0;
  for (int d : input_dims) nu += d;
  const int nz = nx + nu;
  const auto offs = offsets_of(input_dims);

  const Mat A = capped_spectral_radius(rng.matrix(nx, nx, 1.0 / std::sqrt(nx)), 1.2);
  const Mat B = rng.matrix(nx, nu, 1.0 / std::sqrt(nx));
  Dynamics<double> dyn;
  dyn.value = [A, B](int, const Vec& x, const Vec& u) -> Vec { return A * x + B * u; };
  dyn.derivatives = [A, B, nx, nz](int, const Vec&, const Vec&) {
    return DynamicsDerivatives<double>{A, B, std::vector<Mat>(nx, Mat::Zero(nz, nz))};
  };

  std::vector<StageCost<double>> stage;
  std::vector<TerminalCost<double>> terminal;
  for (int n = 0; n < N; ++n) {
    auto Q = std::make_shared<const Mat>(player_hessian(rng, nx, nu, offs[n], input_dims[n]));
    auto q = std::make_shared<std::vector<Vec>>();
    for (int k = 0; k < T; ++k) q->push_back(rng.vector(nz, 0.5));
    StageCost<double> sc;
    sc.derivatives = [Q, q, nx, nz](int k, const Vec& x, const Vec& u) {
      Vec z(nz);
      z << x, u;
      const Vec Qz = *Q * z;
      return CostDerivatives<double>{0.5 * z.dot(Qz) + (*q)[k].dot(z), Qz + (*q)[k], *Q};
    };
    sc.value = [f = sc.derivatives](int k, const Vec& x, const Vec& u) { return f(k, x, u).value; };
    stage.push_back(std::move(sc));

    const Mat V = rng.matrix(nx, nx, 1.0 / std::sqrt(nx));
    const Mat QT = V * V.transpose();
    const Vec qT = rng.vector(nx, 0.5);
    TerminalCost<double> tc;
    tc.derivatives = [QT, qT](const Vec& x) {
      const Vec Qx = QT * x;
      return CostDerivatives<double>{0.5 * x.dot(Qx) + qT.dot(x), Qx + qT, QT};
    };
    tc.value = [f = tc.derivatives](const Vec& x) { return f(x).value; };
    terminal.push_back(std::move(tc));
  }
  return Problem(T, nx, input_dims, std::move(dyn), std::move(stage), std::move(terminal));
}

Problem random_smooth_game(std::uint64_t seed, int N, int nx, const std::vector<int>& input_dims,
                           int T) {
  check_random_dims(N, nx, input_dims, T);
  Rng rng(seed);
  int nu = 0;
  for (int d : input_dims) nu += d;
  const int nz = nx + nu;
  const auto offs = offsets_of(input_dims);

  Mat AB(nx, nz);
  AB << capped_spectral_radius(rng.matrix(nx, nx, 1.0 / std::sqrt(nx)), 1.0),
      rng.matrix(nx, nu, 1.0 / std::sqrt(nx));
  const Mat W = rng.matrix(nx, nz, 1.0 / std::sqrt(nz));  // rows: [C E]
  Vec amp(nx);
  for (int l = 0; l < nx; ++l) amp[l] = rng.uniform(0.05, 0.3);

  Dynamics<double> dyn;
  dyn.value = [AB, W, amp, nz](int, const Vec& x, const Vec& u) -> Vec {
    Vec z(nz);
    z << x, u;
    return AB * z + amp.cwiseProduct((W * z).array().sin().matrix());
  };
  dyn.derivatives = [AB, W, amp, nx, nz](int, const Vec& x, const Vec& u) {
    Vec z(nz);
    z << x, u;
    const Vec arg = W * z;
    Mat J = AB;
    DynamicsDerivatives<double> out;
    out.G.reserve(nx);
    for (int l = 0; l < nx; ++l) {
      J.row(l) += amp[l] * std::cos(arg[l]) * W.row(l);
      out.G.push_back(-amp[l] * std::sin(arg[l]) * W.row(l).transpose() * W.row(l));
    }
    out.A = J.leftCols(nx);
    out.B = J.rightCols(nz - nx);
    return out;
  };

  std::vector<StageCost<double>> stage;
  std::vector<TerminalCost<double>> terminal;
  for (int n = 0; n < N; ++n) {
    const Mat Q = player_hessian(rng, nx, nu, offs[n], input_dims[n]);
    const Vec q = rng.vector(nz, 0.5);
    const Vec e = rng.vector(nz, 1.0 / std::sqrt(nz));
    const double b = rng.uniform(0.2, 1.0);
    StageCost<double> sc;
    sc.derivatives = [Q, q, e, b, nz](int, const Vec& x, const Vec& u) {
      Vec z(nz);
      z << x, u;
      const double s = e.dot(z);
      const double t = std::tanh(s);
      const Vec Qz = Q * z;
      // log cosh(s) = |s| + log1p(exp(-2|s|)) - log 2, stable for large |s|.
      const double lc = std::abs(s) + std::log1p(std::exp(-2 * std::abs(s))) - std::log(2.0);
      return CostDerivatives<double>{0.5 * z.dot(Qz) + q.dot(z) + b * lc, Qz + q + b * t * e,
                                     Q + b * (1 - t * t) * e * e.transpose()};
    };
    sc.value = [f = sc.derivatives](int k, const Vec& x, const Vec& u) { return f(k, x, u).value; };
    stage.push_back(std::move(sc));

    const Mat V = rng.matrix(nx, nx, 1.0 / std::sqrt(nx));
    const Mat QT = V * V.transpose();
    const Vec qT = rng.vector(nx, 0.5);
    TerminalCost<double> tc;
    tc.derivatives = [QT, qT](const Vec& x) {
      const Vec Qx = QT * x;
      return CostDerivatives<double>{0.5 * x.dot(Qx) + qT.dot(x), Qx + qT, QT};
    };
    tc.value = [f = tc.derivatives](const Vec& x) { return f(x).value; };
    terminal.push_back(std::move(tc));
  }
  return Problem(T, nx, input_dims, std::move(dyn), std::move(stage), std::move(terminal));
}

// ---- registry ----------------------------------------------------------------

namespace {

std::map<std::string, double> merged(const std::string& name, std::map<std::string, double> defaults,
                                     const std::map<std::string, double>& overrides) {
  for (const auto& [key, value] : overrides) {
    auto it = defaults.find(key);
    if (it == defaults.end()) {
      std::ostringstream msg;
      msg << "unknown parameter '" << key << "' for problem '" << name << "'; known:";
      for (const auto& kv : defaults) msg << ' ' << kv.first;
      throw Error(msg.str());
    }
    it->second = value;
  }
  return defaults;
}

int as_count(const std::map<std::string, double>& p, const std::string& key) {
  const double v = p.at(key);
  if (!(v >= 1) || v != std::floor(v) || v > 1e6)
    throw Error("parameter '" + key + "' must be a positive integer");
  return static_cast<int>(v);
}

const std::map<std::string, double> kOwnerDogDefaults = {
    {"horizon", 10}, {"x0_owner", -1.0}, {"x0_dog", 2.0}, {"terminal_weight", 100.0},
    {"dog_weight", 40.0}, {"lambda", 30.0}};
const std::map<std::string, double> kPlanarDefaults = {
    {"horizon", 119}, {"dt", 0.04},        {"alpha", 10.0},    {"beta", 3.0},
    {"radius", 0.25}, {"pull_gain", 1.0},  {"push_gain", 0.3}, {"lambda", 10.0}};
const std::map<std::string, double> kRandomDefaults = {
    {"players", 2}, {"state_dim", 3}, {"input_dim", 2}, {"horizon", 10}, {"lambda", 0.0}};

}  // namespace

std::vector<std::string> problem_names() {
  return {"owner-dog", "planar-robots", "random-lq", "random-smooth"};
}

std::vector<ProblemSpecRecord> list_problems() {
  std::vector<ProblemSpecRecord> out;
  for (const auto& name : problem_names()) out.push_back(make_instance(name).record);
  return out;
}

Instance make_instance(const std::string& name, const std::map<std::string, double>& overrides,
                       std::uint64_t seed) {
  if (name == "owner-dog") {
    const auto p = merged(name, kOwnerDogDefaults, overrides);
    OwnerDogParams op{as_count(p, "horizon"), p.at("x0_owner"), p.at("x0_dog"),
                      p.at("terminal_weight"), p.at("dog_weight")};
    Vec x0(2);
    x0 << op.x0_owner, op.x0_dog;
    auto problem = owner_dog(op);
    auto u0 = zero_controls(problem);
    return {{name, "1-D owner and dog, tanh-saturated inputs", op.horizon, x0, p.at("lambda"), p},
            std::move(problem), x0, std::move(u0)};
  }
  if (name == "planar-robots") {
    const auto p = merged(name, kPlanarDefaults, overrides);
    PlanarParams pp;
    pp.horizon = as_count(p, "horizon");
    pp.dt = p.at("dt");
    pp.alpha = p.at("alpha");
    pp.beta = p.at("beta");
    pp.radius = p.at("radius");
    const Vec x0 = planar_default_x0();
    auto u0 = planar_push_pull(pp, x0, {p.at("pull_gain"), p.at("push_gain")});
    return {{name, "three planar robots reaching goals with collision avoidance", pp.horizon, x0,
             p.at("lambda"), p},
            planar_robots(pp), x0, std::move(u0)};
  }
  if (name == "random-lq" || name == "random-smooth") {
    auto defaults = kRandomDefaults;
    if (name == "random-smooth") defaults["lambda"] = 1.0;  // unregularized steps diverge from u = 0
    const auto p = merged(name, defaults, overrides);
    const int N = as_count(p, "players");
    const int nx = as_count(p, "state_dim");
    const int T = as_count(p, "horizon");
    const std::vector<int> dims(N, as_count(p, "input_dim"));
    auto problem = name == "random-lq" ? random_lq_game(seed, N, nx, dims, T)
                                       : random_smooth_game(seed, N, nx, dims, T);
    const Vec x0 = random_x0(seed, nx);
    auto u0 = zero_controls(problem);
    const char* desc = name == "random-lq" ? "seeded linear-quadratic game"
                                           : "seeded smooth nonlinear game";
    return {{name, desc, T, x0, p.at("lambda"), p}, std::move(problem), x0, std::move(u0)};
  }
  std::ostringstream msg;
  msg << "unknown problem '" << name << "'; available:";
  for (const auto& n : problem_names()) msg << ' ' << n;
  throw Error(msg.str());
}

}  // namespace dyngame::catalog
