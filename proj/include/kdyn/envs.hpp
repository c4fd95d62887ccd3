#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "kdyn/dataset.hpp"
#include "kdyn/errors.hpp"
#include "kdyn/rng.hpp"

namespace kdyn {

enum class EnvKind { Pendulum, Duffing, Linear4D };
enum class DataPolicy { UniformRandom, SinusoidSweep };

inline const char* to_string(EnvKind k) {
  switch (k) {
    case EnvKind::Pendulum: return "pendulum";
    case EnvKind::Duffing: return "duffing";
    default: return "linear4d";
  }
}

inline const char* to_string(DataPolicy p) {
  return p == DataPolicy::UniformRandom ? "uniform-random" : "sinusoid-sweep";
}

inline EnvKind parse_env(const std::string& s) {
  if (s == "pendulum") return EnvKind::Pendulum;
  if (s == "duffing") return EnvKind::Duffing;
  if (s == "linear4d") return EnvKind::Linear4D;
  throw ConfigError("unknown env '" + s + "'");
}

inline DataPolicy parse_policy(const std::string& s) {
  if (s == "uniform-random") return DataPolicy::UniformRandom;
  if (s == "sinusoid-sweep") return DataPolicy::SinusoidSweep;
  throw ConfigError("unknown policy '" + s + "'");
}

// Physical state lives in phys_dim coordinates; the dataset stores the
// feature embedding (cos/sin for angles) so downstream losses never see a
// wrapped angle discontinuity.
struct EnvSpec {
  EnvKind kind = EnvKind::Pendulum;
  std::size_t phys_dim = 2, feature_dim = 3, action_dim = 1;
  double dt = 0.05;
  double action_lo = -2.0, action_hi = 2.0;

  // pendulum: th_ddot = -(g/l) sin th - damping*th_dot + u/(m l^2)
  double gravity = 9.81, length = 1.0, mass = 1.0, damping = 0.1;
  // duffing: x_ddot = -delta*x_dot - alpha*x - beta*x^3 + u
  double alpha = -1.0, beta = 1.0, delta = 0.2;
  // linear4d: x_dot = A x + B u, two spiral blocks with equal decay rates
  std::array<double, 16> a_mat{};
  std::array<double, 4> b_vec{};
};

inline EnvSpec make_env_spec(EnvKind kind) {
  EnvSpec es;
  es.kind = kind;
  switch (kind) {
    case EnvKind::Pendulum:
      es.phys_dim = 2;
      es.feature_dim = 3;
      es.action_lo = -2.0;
      es.action_hi = 2.0;
      break;
    case EnvKind::Duffing:
      es.phys_dim = 2;
      es.feature_dim = 2;
      es.action_lo = -1.0;
      es.action_hi = 1.0;
      break;
    case EnvKind::Linear4D:
      es.phys_dim = 4;
      es.feature_dim = 4;
      es.action_lo = -1.0;
      es.action_hi = 1.0;
      // clang-format off
      es.a_mat = {-0.2, -1.0,  0.0,  0.0,
                   1.0, -0.2,  0.0,  0.0,
                   0.0,  0.0, -0.2, -2.0,
                   0.0,  0.0,  2.0, -0.2};
      // clang-format on
      es.b_vec = {0.0, 1.0, 0.0, 1.0};
      break;
  }
  return es;
}

inline double wrap_angle(double th) {
  return std::remainder(th, 2.0 * std::numbers::pi);
}

inline void env_deriv(const EnvSpec& es, const double* x, const double* u,
                      double* dx) {
  switch (es.kind) {
    case EnvKind::Pendulum: {
      const double th = x[0], thd = x[1];
      dx[0] = thd;
      dx[1] = -(es.gravity / es.length) * std::sin(th) - es.damping * thd +
              u[0] / (es.mass * es.length * es.length);
      break;
    }
    case EnvKind::Duffing: {
      const double p = x[0], v = x[1];
      dx[0] = v;
      dx[1] = -es.delta * v - es.alpha * p - es.beta * p * p * p + u[0];
      break;
    }
    case EnvKind::Linear4D: {
      for (std::size_t i = 0; i < 4; ++i) {
        double s = es.b_vec[i] * u[0];
        for (std::size_t j = 0; j < 4; ++j) s += es.a_mat[i * 4 + j] * x[j];
        dx[i] = s;
      }
      break;
    }
  }
}

// One RK4 step with the (clipped) action held constant across the substeps.
inline void env_step(const EnvSpec& es, const double* x, const double* u_raw,
                     double* out) {
  constexpr std::size_t kMaxDim = 4;
  if (es.phys_dim > kMaxDim) throw ShapeError("env state dimension too large");
  double u[1];
  u[0] = std::clamp(u_raw[0], es.action_lo, es.action_hi);
  const std::size_t n = es.phys_dim;
  const double h = es.dt;
  double k1[kMaxDim], k2[kMaxDim], k3[kMaxDim], k4[kMaxDim], tmp[kMaxDim];
  env_deriv(es, x, u, k1);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
  env_deriv(es, tmp, u, k2);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
  env_deriv(es, tmp, u, k3);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + h * k3[i];
  env_deriv(es, tmp, u, k4);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = x[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    if (!std::isfinite(out[i]))
      throw NumericError("environment state became non-finite");
  }
}

// Reward of taking (clipped) action u in physical state x, before stepping.
inline double env_reward(const EnvSpec& es, const double* x,
                         const double* u_raw) {
  const double u = std::clamp(u_raw[0], es.action_lo, es.action_hi);
  switch (es.kind) {
    case EnvKind::Pendulum: {
      const double e = wrap_angle(x[0]);
      return -(e * e + 0.1 * x[1] * x[1] + 0.001 * u * u);
    }
    case EnvKind::Duffing:
      return -(x[0] * x[0] + x[1] * x[1]) - 0.01 * u * u;
    default: {
      double s = 0;
      for (std::size_t i = 0; i < 4; ++i) s += x[i] * x[i];
      return -s - 0.01 * u * u;
    }
  }
}

// Reward evaluated on feature-space coordinates; for the pendulum the wrapped
// angle is recovered as atan2(sin, cos), which is exactly the wrap.
inline double env_reward_features(const EnvSpec& es, const double* feat,
                                  const double* u_raw) {
  const double u = std::clamp(u_raw[0], es.action_lo, es.action_hi);
  if (es.kind == EnvKind::Pendulum) {
    const double e = std::atan2(feat[1], feat[0]);
    return -(e * e + 0.1 * feat[2] * feat[2] + 0.001 * u * u);
  }
  double s = 0;
  for (std::size_t i = 0; i < es.feature_dim; ++i) s += feat[i] * feat[i];
  return -s - 0.01 * u * u;
}

inline void env_features(const EnvSpec& es, const double* x, double* feat) {
  if (es.kind == EnvKind::Pendulum) {
    feat[0] = std::cos(x[0]);
    feat[1] = std::sin(x[0]);
    feat[2] = x[1];
  } else {
    for (std::size_t i = 0; i < es.phys_dim; ++i) feat[i] = x[i];
  }
}

// Draw order is part of the format: changing it changes every dataset.
inline void init_state(const EnvSpec& es, Rng& rng, double* x) {
  switch (es.kind) {
    case EnvKind::Pendulum:
      // near the inverted (unstable) pose; damping pulls episodes toward 0
      x[0] = std::numbers::pi + rng.uniform(-0.05, 0.05);
      x[1] = rng.uniform(-0.05, 0.05);
      break;
    case EnvKind::Duffing:
      x[0] = rng.uniform(-1.5, 1.5);
      x[1] = rng.uniform(-1.5, 1.5);
      break;
    case EnvKind::Linear4D:
      for (std::size_t i = 0; i < 4; ++i) x[i] = rng.uniform(-1.0, 1.0);
      break;
  }
}

struct SinusoidParams {
  double amp = 0, freq_hz = 0, phase = 0;
};

inline SinusoidParams draw_sinusoid(const EnvSpec& es, Rng& rng) {
  SinusoidParams sp;
  sp.amp = rng.uniform(0.5, 1.0) * es.action_hi;
  sp.freq_hz = rng.uniform(0.1, 1.0);
  sp.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  return sp;
}

// Rolls n_traj episodes of T steps under the chosen excitation policy.
// Per-trajectory streams mean any subset of trajectories is reproducible
// independently of the others. Stored states are feature-space.
inline Dataset generate_dataset(const EnvSpec& es, DataPolicy pol,
                                std::size_t n_traj, std::size_t T,
                                std::uint64_t seed) {
  if (n_traj == 0 || T == 0)
    throw ConfigError("dataset needs at least one trajectory and one step");
  Dataset ds;
  ds.descriptor = std::string(to_string(es.kind)) + " policy=" +
                  to_string(pol) + " seed=" + std::to_string(seed);
  ds.state_dim = std::uint32_t(es.feature_dim);
  ds.action_dim = std::uint32_t(es.action_dim);
  ds.n_traj = std::uint32_t(n_traj);
  ds.T = std::uint32_t(T);
  ds.dt = es.dt;
  ds.states.resize(n_traj * (T + 1) * es.feature_dim);
  ds.actions.resize(n_traj * T * es.action_dim);
  ds.rewards.resize(n_traj * T);

  for (std::size_t traj = 0; traj < n_traj; ++traj) {
    Rng rng(seed, traj);
    double x[4];
    init_state(es, rng, x);
    SinusoidParams sp;
    if (pol == DataPolicy::SinusoidSweep) sp = draw_sinusoid(es, rng);
    env_features(es, x, &ds.states[traj * (T + 1) * es.feature_dim]);
    for (std::size_t t = 0; t < T; ++t) {
      double u;
      if (pol == DataPolicy::UniformRandom) {
        u = rng.uniform(es.action_lo, es.action_hi);
      } else {
        u = sp.amp * std::sin(2.0 * std::numbers::pi * sp.freq_hz *
                                  (double(t) * es.dt) +
                              sp.phase);
      }
      u = std::clamp(u, es.action_lo, es.action_hi);
      ds.actions[(traj * T + t) * es.action_dim] = u;
      ds.rewards[traj * T + t] = env_reward(es, x, &u);
      double nx[4];
      env_step(es, x, &u, nx);
      for (std::size_t i = 0; i < es.phys_dim; ++i) x[i] = nx[i];
      env_features(es, x,
                   &ds.states[(traj * (T + 1) + t + 1) * es.feature_dim]);
    }
  }

  // 80:20 trajectory-level split, shuffled on a derived stream
  std::vector<std::uint32_t> order(n_traj);
  for (std::size_t i = 0; i < n_traj; ++i) order[i] = std::uint32_t(i);
  Rng split_rng(seed, 0x5F117ull);
  shuffle(order, split_rng);
  const std::size_t n_train = std::max<std::size_t>(1, (n_traj * 8) / 10);
  ds.train_idx.assign(order.begin(), order.begin() + n_train);
  ds.test_idx.assign(order.begin() + n_train, order.end());
  std::sort(ds.train_idx.begin(), ds.train_idx.end());
  std::sort(ds.test_idx.begin(), ds.test_idx.end());
  ds.validate();
  return ds;
}

}  // namespace kdyn
