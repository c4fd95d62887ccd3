#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kdyn/baseline.hpp"
#include "kdyn/dataset.hpp"
#include "kdyn/model.hpp"
#include "kdyn/rng.hpp"

namespace kdyn {

// ---- loss pieces -------------------------------------------------------------

// Plain sums of squared differences over equally shaped buffers; the training
// loop divides by the batch size.
template <class Real>
double consistency_loss(const std::vector<Real>& pred_latents,
                        const std::vector<Real>& true_latents) {
  if (pred_latents.size() != true_latents.size())
    throw ShapeError("consistency loss: latent shapes differ");
  return detail::sq_diff_sum(pred_latents.data(), true_latents.data(),
                             pred_latents.size());
}

template <class Real>
double state_prediction_loss(const std::vector<Real>& decoded,
                             const std::vector<Real>& true_states) {
  if (decoded.size() != true_states.size())
    throw ShapeError("state loss: shapes differ");
  return detail::sq_diff_sum(decoded.data(), true_states.data(), decoded.size());
}

template <class Real>
double reward_prediction_loss(const std::vector<Real>& pred,
                              const std::vector<Real>& true_rewards) {
  if (pred.size() != true_rewards.size())
    throw ShapeError("reward loss: shapes differ");
  return detail::sq_diff_sum(pred.data(), true_rewards.data(), pred.size());
}

// ---- optimizer ---------------------------------------------------------------

// First/second moments kept in double regardless of the working precision.
struct AdamState {
  std::vector<std::vector<double>> m, v;  // parallel to store entries
  std::uint64_t t = 0;

  template <class Real>
  static AdamState for_store(const ParamStore<Real>& ps) {
    AdamState st;
    st.m.resize(ps.entries.size());
    st.v.resize(ps.entries.size());
    for (std::size_t e = 0; e < ps.entries.size(); ++e) {
      st.m[e].assign(ps.entries[e].value.size(), 0.0);
      st.v[e].assign(ps.entries[e].value.size(), 0.0);
    }
    return st;
  }
};

// Bias-corrected adaptive update; frozen entries are skipped, clipped entries
// are projected back into their interval after the step.
template <class Real>
void adam_step(ParamStore<Real>& ps, AdamState& st, double lr, double beta1,
               double beta2, double eps) {
  if (st.m.size() != ps.entries.size())
    throw ShapeError("optimizer state does not match the parameter store");
  st.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, double(st.t));
  const double bc2 = 1.0 - std::pow(beta2, double(st.t));
  for (std::size_t e = 0; e < ps.entries.size(); ++e) {
    auto& ent = ps.entries[e];
    if (ent.value.size() != st.m[e].size())
      throw ShapeError("optimizer state does not match parameter " + ent.name);
    if (ent.frozen) continue;
    for (std::size_t i = 0; i < ent.value.size(); ++i) {
      const double g = double(ent.grad[i]);
      if (!std::isfinite(g))
        throw NumericError("non-finite gradient in " + ent.name);
      st.m[e][i] = beta1 * st.m[e][i] + (1.0 - beta1) * g;
      st.v[e][i] = beta2 * st.v[e][i] + (1.0 - beta2) * g * g;
      const double mhat = st.m[e][i] / bc1;
      const double vhat = st.v[e][i] / bc2;
      double x = double(ent.value[i]) - lr * mhat / (std::sqrt(vhat) + eps);
      if (ent.clipped())
        x = std::min(std::max(x, ent.clip_lo), ent.clip_hi);
      ent.value[i] = Real(x);
    }
  }
}

// ---- sub-trajectory sampling ---------------------------------------------

struct SamplePair {
  std::uint32_t traj = 0, start = 0;
};

// All (train trajectory, start) pairs, shuffled without replacement. The
// epoch index seeds a derived stream so resuming at an epoch boundary
// reproduces the exact order.
inline std::vector<SamplePair> epoch_pairs(const Dataset& ds, std::size_t tau,
                                           std::uint64_t seed,
                                           std::size_t epoch) {
  if (tau == 0 || tau > ds.T)
    throw ConfigError("horizon " + std::to_string(tau) +
                      " exceeds trajectory length " + std::to_string(ds.T));
  std::vector<SamplePair> pairs;
  pairs.reserve(ds.train_idx.size() * (ds.T - tau + 1));
  for (const auto traj : ds.train_idx)
    for (std::uint32_t s = 0; s + tau <= ds.T; ++s)
      pairs.push_back({traj, s});
  Rng rng(seed, 0x5A3C0000ull + epoch);
  shuffle(pairs, rng);
  return pairs;
}

template <class Real>
void gather_batch(const Dataset& ds, const std::vector<SamplePair>& pairs,
                  std::size_t offset, std::size_t batch, std::size_t tau,
                  BatchData<Real>& bd) {
  bd.batch = batch;
  bd.tau = tau;
  bd.state_dim = ds.state_dim;
  bd.action_dim = ds.action_dim;
  bd.s0.resize(batch * ds.state_dim);
  bd.actions.resize(batch * tau * ds.action_dim);
  bd.targets.resize(batch * tau * ds.state_dim);
  bd.rewards.resize(batch * tau);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto [traj, start] = pairs[offset + b];
    const double* s0 = ds.state(traj, start);
    for (std::size_t d = 0; d < ds.state_dim; ++d)
      bd.s0[b * ds.state_dim + d] = Real(s0[d]);
    for (std::size_t k = 0; k < tau; ++k) {
      const double* a = ds.action(traj, start + k);
      for (std::size_t d = 0; d < ds.action_dim; ++d)
        bd.actions[(b * tau + k) * ds.action_dim + d] = Real(a[d]);
      const double* st = ds.state(traj, start + k + 1);
      for (std::size_t d = 0; d < ds.state_dim; ++d)
        bd.targets[(b * tau + k) * ds.state_dim + d] = Real(st[d]);
      bd.rewards[b * tau + k] = Real(ds.reward(traj, start + k));
    }
  }
}

template <class Real>
BatchData<Real> gather_batch(const Dataset& ds,
                             const std::vector<SamplePair>& pairs,
                             std::size_t offset, std::size_t batch,
                             std::size_t tau) {
  BatchData<Real> bd;
  gather_batch(ds, pairs, offset, batch, tau, bd);
  return bd;
}

// ---- training loop -----------------------------------------------------------

enum class ModelKind { Koopman, MlpBaseline };

inline const char* to_string(ModelKind k) {
  return k == ModelKind::Koopman ? "koopman" : "mlp-baseline";
}

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "koopman") return ModelKind::Koopman;
  if (s == "mlp-baseline") return ModelKind::MlpBaseline;
  throw ConfigError("unknown model kind '" + s + "'");
}

struct TrainConfig {
  std::size_t epochs = 50, batch = 32, tau = 32;
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::uint64_t seed = 0;
  LossWeights weights;
  bool stop_grad_targets = true;
  double loss_blowup = 1e12;  // finite-but-runaway guard
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double total = 0, cons = 0, state = 0, reward = 0;  // batch means
  double grad_norm_mean = 0, grad_norm_max = 0;
  double envelope_max_rel = 0;     // spectral model: Theorem-style bound check
  double bptt_max_step_norm = 0;   // baseline: largest per-step latent gradient
  double wall_sec = 0;
};

enum class TrainStatus { Completed, Diverged };

struct TrainResult {
  TrainStatus status = TrainStatus::Completed;
  std::size_t epochs_run = 0;
  std::string divergence_note;
  std::vector<EpochMetrics> history;
};

// Called after every finished epoch with the metrics row and the index of the
// next epoch; checkpointing hooks in here.
using EpochCallback = std::function<void(const EpochMetrics&, std::size_t)>;

namespace detail {

template <class Model, class StepFn>
TrainResult train_generic(Model& md, const Dataset& ds, const TrainConfig& cfg,
                          std::size_t start_epoch, bool stat_is_envelope,
                          StepFn step_one, const EpochCallback& on_epoch) {
  ds.validate();
  if (cfg.batch == 0) throw ConfigError("batch size must be positive");
  TrainResult res;
  for (std::size_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto pairs = epoch_pairs(ds, cfg.tau, cfg.seed, epoch);
    const std::size_t n_batches = pairs.size() / cfg.batch;
    if (n_batches == 0)
      throw ConfigError("batch " + std::to_string(cfg.batch) +
                        " exceeds the " + std::to_string(pairs.size()) +
                        " available sub-trajectories");
    EpochMetrics em;
    em.epoch = epoch;
    for (std::size_t bi = 0; bi < n_batches; ++bi) {
      LossBreakdown loss;
      double stat = 0;
      if (!step_one(pairs, bi * cfg.batch, loss, stat, res.divergence_note)) {
        res.status = TrainStatus::Diverged;
        res.epochs_run = epoch;
        return res;
      }
      if (!std::isfinite(loss.total) || loss.total > cfg.loss_blowup) {
        res.status = TrainStatus::Diverged;
        res.divergence_note = "loss became " + std::to_string(loss.total) +
                              " at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(bi);
        res.epochs_run = epoch;
        return res;
      }
      em.total += loss.total;
      em.cons += loss.cons;
      em.state += loss.state;
      em.reward += loss.reward;
      const double gn = md.ps.grad_norm();
      em.grad_norm_mean += gn;
      em.grad_norm_max = std::max(em.grad_norm_max, gn);
      if (stat_is_envelope)
        em.envelope_max_rel = std::max(em.envelope_max_rel, stat);
      else
        em.bptt_max_step_norm = std::max(em.bptt_max_step_norm, stat);
    }
    const double inv = 1.0 / double(n_batches);
    em.total *= inv;
    em.cons *= inv;
    em.state *= inv;
    em.reward *= inv;
    em.grad_norm_mean *= inv;
    em.wall_sec = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    res.history.push_back(em);
    res.epochs_run = epoch + 1;
    if (on_epoch) on_epoch(em, epoch + 1);
  }
  return res;
}

}  // namespace detail

template <class Real>
TrainResult train_koopman(KoopmanModel<Real>& md, const Dataset& ds,
                          const TrainConfig& cfg, AdamState& adam,
                          std::size_t start_epoch = 0,
                          const EpochCallback& on_epoch = {}) {
  if (ds.state_dim != md.dims.state_dim || ds.action_dim != md.dims.action_dim)
    throw ConfigError("dataset dims do not match the model");
  // batch and forward buffers persist across steps
  BatchData<Real> bd;
  KoopForward<Real> fw;
  auto step_one = [&](const std::vector<SamplePair>& pairs, std::size_t off,
                      LossBreakdown& loss, double& stat, std::string& note) {
    gather_batch(ds, pairs, off, cfg.batch, cfg.tau, bd);
    koop_forward(md, bd, fw, !cfg.stop_grad_targets);
    loss = koop_loss(fw, bd, cfg.weights);
    if (!std::isfinite(loss.total)) return true;  // outer loop reports it
    md.ps.zero_grads();
    EnvelopeStat env;
    koop_backward(md, bd, fw, cfg.weights, cfg.stop_grad_targets, &env);
    stat = env.max_rel;
    try {
      adam_step(md.ps, adam, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
    } catch (const NumericError& e) {
      note = e.what();
      return false;
    }
    return true;
  };
  return detail::train_generic(md, ds, cfg, start_epoch, true, step_one,
                               on_epoch);
}

template <class Real>
TrainResult train_baseline(MlpBaselineModel<Real>& md, const Dataset& ds,
                           const TrainConfig& cfg, AdamState& adam,
                           std::size_t start_epoch = 0,
                           const EpochCallback& on_epoch = {}) {
  if (ds.state_dim != md.dims.state_dim || ds.action_dim != md.dims.action_dim)
    throw ConfigError("dataset dims do not match the model");
  BatchData<Real> bd;
  BaselineForward<Real> fw;
  auto step_one = [&](const std::vector<SamplePair>& pairs, std::size_t off,
                      LossBreakdown& loss, double& stat, std::string& note) {
    gather_batch(ds, pairs, off, cfg.batch, cfg.tau, bd);
    baseline_forward(md, bd, fw, !cfg.stop_grad_targets);
    loss = baseline_loss(fw, bd, cfg.weights);
    if (!std::isfinite(loss.total)) return true;
    md.ps.zero_grads();
    double max_step = 0;
    baseline_backward(md, bd, fw, cfg.weights, cfg.stop_grad_targets,
                      &max_step);
    stat = max_step;
    try {
      adam_step(md.ps, adam, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
    } catch (const NumericError& e) {
      note = e.what();
      return false;
    }
    return true;
  };
  return detail::train_generic(md, ds, cfg, start_epoch, false, step_one,
                               on_epoch);
}

}  // namespace kdyn
