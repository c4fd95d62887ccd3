#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <set>
#include <vector>

#include "kdyn/envs.hpp"

using namespace kdyn;

TEST_CASE("pendulum rests at the stable fixed point") {
  auto es = make_env_spec(EnvKind::Pendulum);
  double x[2] = {0.0, 0.0}, u = 0.0, out[2];
  env_step(es, x, &u, out);
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 0.0);
}

TEST_CASE("unforced pendulum dissipates energy") {
  auto es = make_env_spec(EnvKind::Pendulum);
  double x[2] = {2.5, 0.0}, u = 0.0;
  auto energy = [&](const double* s) {
    const double ke = 0.5 * es.mass * es.length * es.length * s[1] * s[1];
    const double pe = es.mass * es.gravity * es.length * (1.0 - std::cos(s[0]));
    return ke + pe;
  };
  double prev = energy(x);
  for (int t = 0; t < 1000; ++t) {
    double nx[2];
    env_step(es, x, &u, nx);
    x[0] = nx[0];
    x[1] = nx[1];
    const double e = energy(x);
    REQUIRE(e <= prev + 1e-9);
    prev = e;
  }
  CHECK(prev < 1.0);  // well on its way down from ~17.8 J
}

namespace {

// textbook RK4 in extended precision, written without the production helper
void rk4_ref(const EnvSpec& es, const long double* x, long double u,
             long double h, long double* out) {
  auto deriv = [&](const long double* s, long double* d) {
    if (es.kind == EnvKind::Linear4D) {
      for (int i = 0; i < 4; ++i) {
        long double acc = (long double)es.b_vec[i] * u;
        for (int j = 0; j < 4; ++j) acc += (long double)es.a_mat[i * 4 + j] * s[j];
        d[i] = acc;
      }
    } else {  // pendulum
      d[0] = s[1];
      d[1] = -(es.gravity / es.length) * std::sin((double)s[0]) -
             es.damping * s[1] + u / (es.mass * es.length * es.length);
    }
  };
  const int n = int(es.phys_dim);
  long double k1[4], k2[4], k3[4], k4[4], tmp[4];
  deriv(x, k1);
  for (int i = 0; i < n; ++i) tmp[i] = x[i] + h / 2 * k1[i];
  deriv(tmp, k2);
  for (int i = 0; i < n; ++i) tmp[i] = x[i] + h / 2 * k2[i];
  deriv(tmp, k3);
  for (int i = 0; i < n; ++i) tmp[i] = x[i] + h * k3[i];
  deriv(tmp, k4);
  for (int i = 0; i < n; ++i)
    out[i] = x[i] + h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
}

}  // namespace

TEST_CASE("linear env step agrees with an independent integrator") {
  auto es = make_env_spec(EnvKind::Linear4D);
  Rng rng(15);
  for (int rep = 0; rep < 20; ++rep) {
    double x[4];
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    const double u = rng.uniform(-1.0, 1.0);
    double got[4];
    env_step(es, x, &u, got);
    long double xl[4] = {x[0], x[1], x[2], x[3]}, want[4];
    rk4_ref(es, xl, u, es.dt, want);
    for (int i = 0; i < 4; ++i)
      CHECK(std::abs(got[i] - (double)want[i]) < 1e-14);
  }
}

TEST_CASE("linear env step converges to the exact flow") {
  // exact solution per 2x2 block [[mu,-w],[w,mu]]:
  //   x(h) = e^{Ah} x0 + A^{-1} (e^{Ah} - I) B u
  auto es = make_env_spec(EnvKind::Linear4D);
  const double h = es.dt;
  auto block_exact = [&](double mu, double w, const double* x0, double bu,
                         double* out) {
    const double e = std::exp(mu * h), c = std::cos(w * h), s = std::sin(w * h);
    // e^{Ah} x0
    const double y0 = e * (c * x0[0] - s * x0[1]);
    const double y1 = e * (s * x0[0] + c * x0[1]);
    // (e^{Ah} - I) B u with B_block = (0, bu): column 1 of (e^{Ah} - I)
    const double g0 = (-e * s) * bu;
    const double g1 = (e * c - 1.0) * bu;
    // A^{-1} = [[mu, w], [-w, mu]] / (mu^2 + w^2)
    const double den = mu * mu + w * w;
    out[0] = y0 + (mu * g0 + w * g1) / den;
    out[1] = y1 + (-w * g0 + mu * g1) / den;
  };
  Rng rng(16);
  for (int rep = 0; rep < 20; ++rep) {
    double x[4];
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    const double u = rng.uniform(-1.0, 1.0);
    double got[4];
    env_step(es, x, &u, got);
    double want[4];
    block_exact(-0.2, 1.0, x, u, want);
    block_exact(-0.2, 2.0, x + 2, u, want + 2);
    for (int i = 0; i < 4; ++i) CHECK(std::abs(got[i] - want[i]) < 1e-6);
  }
}

TEST_CASE("integrator shows fourth order convergence") {
  auto coarse = make_env_spec(EnvKind::Pendulum);
  const double t_end = 0.4, u = 0.7;
  auto integrate = [&](double h) {
    EnvSpec es = coarse;
    es.dt = h;
    double x[2] = {2.0, 0.5};
    const int steps = int(std::round(t_end / h));
    for (int t = 0; t < steps; ++t) {
      double nx[2];
      env_step(es, x, &u, nx);
      x[0] = nx[0];
      x[1] = nx[1];
    }
    return std::pair<double, double>{x[0], x[1]};
  };
  const auto ref = integrate(1e-4);
  auto err = [&](double h) {
    const auto got = integrate(h);
    return std::hypot(got.first - ref.first, got.second - ref.second);
  };
  const double e1 = err(0.05), e2 = err(0.025);
  const double ratio = e1 / e2;
  CHECK(ratio > 8.0);
  CHECK(ratio < 32.0);
}

TEST_CASE("generated datasets are deterministic and well formed") {
  auto es = make_env_spec(EnvKind::Pendulum);
  auto a = generate_dataset(es, DataPolicy::UniformRandom, 10, 50, 42);
  auto b = generate_dataset(es, DataPolicy::UniformRandom, 10, 50, 42);
  CHECK(a.states == b.states);
  CHECK(a.actions == b.actions);
  CHECK(a.rewards == b.rewards);
  CHECK(a.train_idx == b.train_idx);
  CHECK(a.test_idx == b.test_idx);

  CHECK(a.train_idx.size() == 8);
  CHECK(a.test_idx.size() == 2);
  std::set<std::uint32_t> all(a.train_idx.begin(), a.train_idx.end());
  all.insert(a.test_idx.begin(), a.test_idx.end());
  CHECK(all.size() == 10);

  for (double v : a.states) REQUIRE(std::isfinite(v));
  for (double v : a.actions) {
    REQUIRE(std::isfinite(v));
    REQUIRE(v >= es.action_lo);
    REQUIRE(v <= es.action_hi);
  }
  for (double v : a.rewards) {
    REQUIRE(std::isfinite(v));
    REQUIRE(v <= 0.0);
  }

  // feature embedding: (cos, sin, th_dot) rows live on the cylinder
  double max_rate = 0;
  for (std::uint32_t traj = 0; traj < a.n_traj; ++traj)
    for (std::uint32_t t = 0; t <= a.T; ++t) {
      const double* s = a.state(traj, t);
      CHECK(s[0] * s[0] + s[1] * s[1] == Catch::Approx(1.0).epsilon(1e-12));
      max_rate = std::max(max_rate, std::abs(s[2]));
    }
  CHECK(max_rate < 25.0);

  auto c = generate_dataset(es, DataPolicy::UniformRandom, 10, 50, 43);
  CHECK(c.states != a.states);
}

TEST_CASE("sinusoid sweep actions replay from the seed") {
  auto es = make_env_spec(EnvKind::Pendulum);
  const std::uint64_t seed = 91;
  auto ds = generate_dataset(es, DataPolicy::SinusoidSweep, 4, 30, seed);
  for (std::uint32_t traj = 0; traj < 4; ++traj) {
    Rng rng(seed, traj);
    rng.uniform(-0.05, 0.05);  // init angle offset
    rng.uniform(-0.05, 0.05);  // init rate
    const double amp = rng.uniform(0.5, 1.0) * es.action_hi;
    const double f = rng.uniform(0.1, 1.0);
    const double ph = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::uint32_t t = 0; t < ds.T; ++t) {
      const double want = amp * std::sin(2.0 * std::numbers::pi * f *
                                             (double(t) * es.dt) +
                                         ph);
      CHECK(ds.action(traj, t)[0] == Catch::Approx(want).margin(1e-15));
    }
  }
}

TEST_CASE("duffing and linear dataset rewards match the quadratic cost") {
  for (auto kind : {EnvKind::Duffing, EnvKind::Linear4D}) {
    auto es = make_env_spec(kind);
    auto ds = generate_dataset(es, DataPolicy::UniformRandom, 5, 20, 7);
    // replay trajectory 0 from its stream and cross-check stored rewards
    Rng rng(7, 0);
    double x[4];
    init_state(es, rng, x);
    for (std::uint32_t t = 0; t < ds.T; ++t) {
      const double u = ds.action(0, t)[0];
      CHECK(ds.reward(0, t) == Catch::Approx(env_reward(es, x, &u)).margin(0));
      double nx[4];
      env_step(es, x, &u, nx);
      for (std::size_t i = 0; i < es.phys_dim; ++i) x[i] = nx[i];
    }
  }
}
