#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "kdyn/envs.hpp"
#include "kdyn/model.hpp"
#include "kdyn/rng.hpp"

namespace kdyn {

struct PlanConfig {
  std::size_t horizon = 20;
  std::size_t population = 64;
  double elite_frac = 0.125;
  std::size_t iters = 6;
  double action_lo = -1.0, action_hi = 1.0;
  double init_std = 0.5;
  double std_floor = 0.05;
  double discount = 1.0;

  std::size_t n_elite() const {
    return std::max<std::size_t>(
        1, std::size_t(elite_frac * double(population)));
  }
  void validate() const {
    if (horizon == 0) throw ConfigError("plan horizon must be at least 1");
    if (population == 0) throw ConfigError("plan population must be at least 1");
    if (iters == 0) throw ConfigError("plan iterations must be at least 1");
    if (!(elite_frac > 0.0) || elite_frac > 1.0)
      throw ConfigError("elite fraction must be in (0, 1]");
    if (!(action_lo < action_hi))
      throw ConfigError("plan action bounds are not well ordered");
    if (std_floor < 0) throw ConfigError("plan std floor must be non-negative");
  }
};

// Candidate evaluation against the real simulator; `state` is the physical
// env state. This is the oracle controller used to calibrate the learned one.
struct TruePlanModel {
  EnvSpec es;

  std::size_t action_dim() const { return es.action_dim; }

  std::vector<double> evaluate(const double* state,
                               const std::vector<double>& actions,
                               std::size_t N, std::size_t H,
                               double discount) const {
    std::vector<double> ret(N, 0.0);
    for (std::size_t n = 0; n < N; ++n) {
      double x[4];
      for (std::size_t i = 0; i < es.phys_dim; ++i) x[i] = state[i];
      double gamma = 1.0;
      for (std::size_t t = 0; t < H; ++t) {
        const double* u = &actions[(n * H + t) * es.action_dim];
        ret[n] += gamma * env_reward(es, x, u);
        double nx[4];
        env_step(es, x, u, nx);
        for (std::size_t i = 0; i < es.phys_dim; ++i) x[i] = nx[i];
        gamma *= discount;
      }
    }
    return ret;
  }
};

// Candidate evaluation through the spectral model: encode the (feature-space)
// start state once, run the batched latent rollout over all candidates, and
// score either with the learned reward head or with the known reward applied
// to decoded states.
template <class Real>
struct LearnedPlanModel {
  const KoopmanModel<Real>* md = nullptr;
  EnvSpec es;
  bool use_reward_head = true;

  std::size_t action_dim() const { return es.action_dim; }

  std::vector<double> evaluate(const double* state,
                               const std::vector<double>& actions,
                               std::size_t N, std::size_t H,
                               double discount) const {
    std::vector<double> feat(es.feature_dim);
    env_features(es, state, feat.data());
    // batch and forward buffers are reused across candidate evaluations
    thread_local BatchData<Real> bd;
    thread_local KoopForward<Real> fw;
    bd.batch = N;
    bd.tau = H;
    bd.state_dim = es.feature_dim;
    bd.action_dim = es.action_dim;
    bd.s0.resize(N * es.feature_dim);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t d = 0; d < es.feature_dim; ++d)
        bd.s0[n * es.feature_dim + d] = Real(feat[d]);
    bd.actions.resize(actions.size());
    for (std::size_t i = 0; i < actions.size(); ++i)
      bd.actions[i] = Real(actions[i]);
    bd.targets.assign(N * H * es.feature_dim, Real(0));
    bd.rewards.assign(N * H, Real(0));
    koop_forward(*md, bd, fw, false);

    std::vector<double> ret(N, 0.0);
    std::vector<double> dec(es.feature_dim);
    for (std::size_t n = 0; n < N; ++n) {
      double gamma = 1.0;
      for (std::size_t t = 0; t < H; ++t) {
        double r;
        if (use_reward_head) {
          r = double(fw.pred_rewards[n * H + t]);
        } else {
          const double* u = &actions[(n * H + t) * es.action_dim];
          if (t == 0) {
            r = env_reward_features(es, feat.data(), u);
          } else {
            const Real* row = &fw.pred_states[(n * H + t - 1) * es.feature_dim];
            for (std::size_t d = 0; d < es.feature_dim; ++d)
              dec[d] = double(row[d]);
            r = env_reward_features(es, dec.data(), u);
          }
        }
        ret[n] += gamma * r;
        gamma *= discount;
      }
    }
    return ret;
  }
};

// Predicted return of one candidate sequence (the planning objective).
template <class M>
double evaluate_plan(const M& model, const double* state,
                     const std::vector<double>& action_seq, std::size_t H,
                     double discount = 1.0) {
  if (H == 0) throw ConfigError("plan horizon must be at least 1");
  if (action_seq.size() != H * model.action_dim())
    throw ShapeError("action sequence length does not match the horizon");
  return model.evaluate(state, action_seq, 1, H, discount)[0];
}

struct PlanResult {
  std::vector<double> actions;        // H x action_dim, the refit elite mean
  double mean_return = 0;             // predicted return of `actions`
  std::vector<double> best_actions;   // best single candidate ever sampled
  double best_return = -std::numeric_limits<double>::infinity();
  std::vector<double> best_per_iter;  // best-ever after each iteration
};

// Cross-entropy refinement: sample around the mean, keep the elites, refit.
// With population 1 and one elite this degenerates to a seeded random walk.
template <class M>
PlanResult cem_plan(const M& model, const double* state, const PlanConfig& cfg,
                    Rng& rng, const std::vector<double>* warm_mean = nullptr) {
  cfg.validate();
  const std::size_t H = cfg.horizon, N = cfg.population;
  const std::size_t a = model.action_dim();
  const std::size_t dims = H * a;

  std::vector<double> mean(dims, 0.0), sd(dims, cfg.init_std);
  if (warm_mean) {
    if (warm_mean->size() != dims)
      throw ShapeError("warm start length does not match the plan shape");
    mean = *warm_mean;
  }

  PlanResult res;
  std::vector<double> cand(N * dims);
  std::vector<std::size_t> order(N);
  for (std::size_t iter = 0; iter < cfg.iters; ++iter) {
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t d = 0; d < dims; ++d)
        cand[n * dims + d] = std::clamp(mean[d] + sd[d] * rng.normal(),
                                        cfg.action_lo, cfg.action_hi);
    const auto ret = model.evaluate(state, cand, N, H, cfg.discount);
    for (std::size_t n = 0; n < N; ++n)
      if (ret[n] > res.best_return) {
        res.best_return = ret[n];
        res.best_actions.assign(cand.begin() + n * dims,
                                cand.begin() + (n + 1) * dims);
      }
    res.best_per_iter.push_back(res.best_return);

    std::iota(order.begin(), order.end(), std::size_t(0));
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) {
                       return ret[i] > ret[j];
                     });
    const std::size_t ne = std::min(cfg.n_elite(), N);
    for (std::size_t d = 0; d < dims; ++d) {
      double m = 0;
      for (std::size_t e = 0; e < ne; ++e) m += cand[order[e] * dims + d];
      m /= double(ne);
      double var = 0;
      for (std::size_t e = 0; e < ne; ++e) {
        const double diff = cand[order[e] * dims + d] - m;
        var += diff * diff;
      }
      var /= double(ne);
      mean[d] = m;
      sd[d] = std::max(std::sqrt(var), cfg.std_floor);
    }
  }
  res.actions = mean;
  res.mean_return = model.evaluate(state, mean, 1, H, cfg.discount)[0];
  return res;
}

struct EpisodeLog {
  std::size_t phys_dim = 0, action_dim = 0;
  std::vector<double> states;   // (L+1) x phys_dim
  std::vector<double> actions;  // L x action_dim
  std::vector<double> rewards;  // L
  double total_return = 0;
};

// Receding-horizon loop: replan every step, execute the first action in the
// real environment, warm-start the next plan with the shifted mean.
template <class M>
EpisodeLog mpc_episode(const EnvSpec& es, const M& model,
                       const PlanConfig& cfg, std::size_t episode_len,
                       std::uint64_t seed) {
  cfg.validate();
  EpisodeLog log;
  log.phys_dim = es.phys_dim;
  log.action_dim = es.action_dim;
  Rng rng(seed);
  double x[4];
  init_state(es, rng, x);
  log.states.insert(log.states.end(), x, x + es.phys_dim);

  const std::size_t dims = cfg.horizon * es.action_dim;
  std::vector<double> warm(dims, 0.0);
  bool have_warm = false;
  for (std::size_t step = 0; step < episode_len; ++step) {
    const auto plan =
        cem_plan(model, x, cfg, rng, have_warm ? &warm : nullptr);
    const double* u = plan.actions.data();
    const double r = env_reward(es, x, u);
    double nx[4];
    env_step(es, x, u, nx);
    log.actions.insert(log.actions.end(), u, u + es.action_dim);
    log.rewards.push_back(r);
    log.total_return += r;
    for (std::size_t i = 0; i < es.phys_dim; ++i) x[i] = nx[i];
    log.states.insert(log.states.end(), x, x + es.phys_dim);
    // shift the plan one step, pad the tail with zero action
    std::copy(plan.actions.begin() + es.action_dim, plan.actions.end(),
              warm.begin());
    std::fill(warm.end() - es.action_dim, warm.end(), 0.0);
    have_warm = true;
  }
  return log;
}

}  // namespace kdyn
