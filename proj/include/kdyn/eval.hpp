#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "kdyn/baseline.hpp"
#include "kdyn/dataset.hpp"
#include "kdyn/model.hpp"
#include "kdyn/training.hpp"

namespace kdyn {

struct EvalConfig {
  std::size_t horizon = 100;
  std::vector<std::size_t> buckets{1, 10, 50, 100};
  std::size_t batch = 64;  // internal batching only; results do not depend on it
};

// Bucket k reports the cumulative MSE over prediction steps 1..k, so a model
// that only drifts at long range still scores well in the early buckets.
struct EvalReport {
  std::size_t n_windows = 0;
  std::vector<std::size_t> buckets;
  std::vector<double> state_mse;
  std::vector<double> state_nmse;  // state_mse / pooled target variance
  std::vector<double> reward_mse;
};

namespace detail {

// fwd(bd, states, rewards) runs the model and writes flat double predictions
// shaped like bd.targets / bd.rewards.
template <class Real, class Fwd>
EvalReport eval_generic(const Dataset& ds, const EvalConfig& ec, Fwd fwd) {
  ds.validate();
  const std::size_t h = ec.horizon;
  if (h == 0) throw ConfigError("eval horizon must be positive");
  if (h > ds.T)
    throw ConfigError("eval horizon " + std::to_string(h) +
                      " exceeds stored trajectory length " +
                      std::to_string(ds.T));
  if (ec.buckets.empty()) throw ConfigError("eval needs at least one bucket");
  for (auto b : ec.buckets)
    if (b == 0 || b > h)
      throw ConfigError("eval bucket " + std::to_string(b) +
                        " outside horizon " + std::to_string(h));
  if (ds.test_idx.empty())
    throw DataError("dataset has no held-out trajectories to evaluate");

  // non-overlapping windows over every held-out trajectory
  std::vector<SamplePair> windows;
  for (auto traj : ds.test_idx)
    for (std::size_t s = 0; s + h <= ds.T; s += h)
      windows.push_back({traj, std::uint32_t(s)});

  std::vector<double> state_sq(h, 0.0), reward_sq(h, 0.0);
  std::vector<double> tgt_sum(ds.state_dim, 0.0), tgt_sumsq(ds.state_dim, 0.0);
  std::vector<double> pred_s, pred_r;
  const std::size_t bsz = std::max<std::size_t>(1, ec.batch);
  for (std::size_t off = 0; off < windows.size(); off += bsz) {
    const std::size_t n = std::min(bsz, windows.size() - off);
    const auto bd = gather_batch<Real>(ds, windows, off, n, h);
    fwd(bd, pred_s, pred_r);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t k = 0; k < h; ++k) {
        double acc = 0;
        for (std::size_t d = 0; d < ds.state_dim; ++d) {
          const std::size_t idx = (b * h + k) * ds.state_dim + d;
          const double diff = pred_s[idx] - double(bd.targets[idx]);
          acc += diff * diff;
          tgt_sum[d] += double(bd.targets[idx]);
          tgt_sumsq[d] += double(bd.targets[idx]) * double(bd.targets[idx]);
        }
        state_sq[k] += acc;
        const double rd = pred_r[b * h + k] - double(bd.rewards[b * h + k]);
        reward_sq[k] += rd * rd;
      }
  }

  const std::size_t n_w = windows.size();
  const double n_tgt = double(n_w) * double(h);
  double pooled_var = 0;
  for (std::size_t d = 0; d < ds.state_dim; ++d) {
    const double mean = tgt_sum[d] / n_tgt;
    pooled_var += tgt_sumsq[d] / n_tgt - mean * mean;
  }
  pooled_var /= double(ds.state_dim);

  EvalReport rep;
  rep.n_windows = n_w;
  rep.buckets = ec.buckets;
  for (auto bk : ec.buckets) {
    double s = 0, r = 0;
    for (std::size_t k = 0; k < bk; ++k) {
      s += state_sq[k];
      r += reward_sq[k];
    }
    const double denom = double(n_w) * double(bk);
    rep.state_mse.push_back(s / (denom * double(ds.state_dim)));
    rep.reward_mse.push_back(r / denom);
    rep.state_nmse.push_back(pooled_var > 0
                                 ? rep.state_mse.back() / pooled_var
                                 : rep.state_mse.back());
  }
  return rep;
}

}  // namespace detail

template <class Real>
EvalReport eval_koopman(const KoopmanModel<Real>& md, const Dataset& ds,
                        const EvalConfig& ec) {
  KoopForward<Real> fw;
  return detail::eval_generic<Real>(
      ds, ec,
      [&](const BatchData<Real>& bd, std::vector<double>& ps,
          std::vector<double>& pr) {
        koop_forward(md, bd, fw);
        ps.assign(fw.pred_states.begin(), fw.pred_states.end());
        pr.assign(fw.pred_rewards.begin(), fw.pred_rewards.end());
      });
}

template <class Real>
EvalReport eval_baseline(const MlpBaselineModel<Real>& md, const Dataset& ds,
                         const EvalConfig& ec) {
  BaselineForward<Real> fw;
  return detail::eval_generic<Real>(
      ds, ec,
      [&](const BatchData<Real>& bd, std::vector<double>& ps,
          std::vector<double>& pr) {
        baseline_forward(md, bd, fw);
        ps.assign(fw.pred_states.begin(), fw.pred_states.end());
        pr.assign(fw.pred_rewards.begin(), fw.pred_rewards.end());
      });
}

}  // namespace kdyn
