#pragma once

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "kdyn/model.hpp"

namespace kdyn {

// Hidden width for the stepwise dynamics net so its parameter count matches
// what the spectral model spends on the spectrum plus injection matrix. The
// dynamics net maps [latent | control embedding] -> latent through one hidden
// layer.
inline std::size_t solve_parity_width(std::size_t m_c, std::size_t a_c) {
  const std::size_t w2m = 2 * m_c;
  const std::size_t extra = (m_c + 1) + 2 * a_c * m_c;  // mu, omega, log_dt, planes
  const std::size_t denom = w2m + 2 * a_c + 1 + w2m;
  if (extra <= w2m) return 1;
  const std::size_t h = (extra - w2m) / denom;
  return h == 0 ? 1 : h;
}

// Same encoder / control embedding / decoder / reward head as the spectral
// model, with the latent recurrence replaced by a stepwise net
// z_{t+1} = dyn([z_t | u_t]) trained by backpropagation through time.
template <class Real>
struct MlpBaselineModel {
  ModelDims dims;
  std::size_t dyn_hidden = 0;
  ParamStore<Real> ps;
  MlpSpec enc_spec, f_spec, dyn_spec, dec_spec, r_spec;
  MlpHandles enc, f, dyn, dec, rhead;

  static MlpBaselineModel make(const ModelDims& dims, std::size_t dyn_hidden,
                               Rng& rng) {
    if (dims.state_dim == 0 || dims.action_dim == 0)
      throw ShapeError("model dims need nonzero state and action sizes");
    MlpBaselineModel md;
    md.dims = dims;
    md.dyn_hidden = dyn_hidden == 0
                        ? solve_parity_width(dims.m_c, dims.a_c)
                        : dyn_hidden;
    const std::size_t m = dims.m_c, a_c = dims.a_c;
    md.enc_spec = {dims.state_dim, 2 * m, dims.enc_hidden, dims.act};
    md.f_spec = {dims.action_dim, 2 * a_c, dims.f_hidden, dims.act};
    md.dyn_spec = {2 * m + 2 * a_c, 2 * m, {md.dyn_hidden}, dims.act};
    md.dec_spec = {2 * m, dims.state_dim, dims.dec_hidden, dims.act};
    md.r_spec = {2 * m + dims.action_dim, 1, dims.r_hidden, dims.act};
    md.enc = add_mlp(md.ps, "enc", md.enc_spec, rng);
    md.f = add_mlp(md.ps, "ctrl", md.f_spec, rng);
    md.dyn = add_mlp(md.ps, "dyn", md.dyn_spec, rng);
    md.dec = add_mlp(md.ps, "dec", md.dec_spec, rng);
    md.rhead = add_mlp(md.ps, "reward", md.r_spec, rng);
    return md;
  }
};

template <class Real>
struct BaselineForward {
  std::size_t B = 0, tau = 0;
  std::vector<Real> x0;             // B x 2m
  std::vector<Real> u_emb;          // (B*tau) x 2a_c
  std::vector<Real> lat;            // (B*tau) x 2m, row (b,t) = z_{t+1}
  std::vector<Real> pred_states;    // (B*tau) x state_dim
  std::vector<Real> r_in;           // (B*tau) x (2m + action_dim)
  std::vector<Real> pred_rewards;   // B*tau
  std::vector<Real> z_tgt;          // (B*tau) x 2m
  MlpCache<Real> enc_cache, f_cache, dec_cache, r_cache, tgt_cache;
  std::vector<MlpCache<Real>> dyn_caches;  // one per horizon step
};

template <class Real>
void baseline_forward(const MlpBaselineModel<Real>& md,
                      const BatchData<Real>& bd, BaselineForward<Real>& fw,
                      bool need_tgt_grads = false) {
  if (bd.state_dim != md.dims.state_dim || bd.action_dim != md.dims.action_dim)
    throw ShapeError("batch dims do not match the model");
  const std::size_t B = bd.batch, tau = bd.tau, m = md.dims.m_c,
                    a_c = md.dims.a_c, sd = md.dims.state_dim,
                    ad = md.dims.action_dim;
  const std::size_t BT = B * tau, w2m = 2 * m, uw = 2 * a_c;
  fw.B = B;
  fw.tau = tau;

  fw.x0.resize(B * w2m);
  mlp_forward(md.ps, md.enc, md.enc_spec, bd.s0.data(), B, fw.x0.data(),
              &fw.enc_cache);
  fw.u_emb.resize(BT * uw);
  mlp_forward(md.ps, md.f, md.f_spec, bd.actions.data(), BT, fw.u_emb.data(),
              &fw.f_cache);

  fw.lat.resize(BT * w2m);
  fw.dyn_caches.resize(tau);
  thread_local std::vector<Real> step_in, step_out;
  step_in.resize(B * (w2m + uw));
  step_out.resize(B * w2m);
  for (std::size_t t = 0; t < tau; ++t) {
    for (std::size_t b = 0; b < B; ++b) {
      Real* row = step_in.data() + b * (w2m + uw);
      const Real* z =
          t == 0 ? fw.x0.data() + b * w2m : fw.lat.data() + (b * tau + t - 1) * w2m;
      std::memcpy(row, z, sizeof(Real) * w2m);
      std::memcpy(row + w2m, fw.u_emb.data() + (b * tau + t) * uw,
                  sizeof(Real) * uw);
    }
    mlp_forward(md.ps, md.dyn, md.dyn_spec, step_in.data(), B, step_out.data(),
                &fw.dyn_caches[t]);
    for (std::size_t b = 0; b < B; ++b)
      std::memcpy(fw.lat.data() + (b * tau + t) * w2m,
                  step_out.data() + b * w2m, sizeof(Real) * w2m);
  }

  fw.pred_states.resize(BT * sd);
  mlp_forward(md.ps, md.dec, md.dec_spec, fw.lat.data(), BT,
              fw.pred_states.data(), &fw.dec_cache);

  const std::size_t q = w2m + ad;
  fw.r_in.resize(BT * q);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < tau; ++t) {
      Real* row = fw.r_in.data() + (b * tau + t) * q;
      const Real* z =
          t == 0 ? fw.x0.data() + b * w2m : fw.lat.data() + (b * tau + t - 1) * w2m;
      std::memcpy(row, z, sizeof(Real) * w2m);
      std::memcpy(row + w2m, bd.actions.data() + (b * tau + t) * ad,
                  sizeof(Real) * ad);
    }
  fw.pred_rewards.resize(BT);
  mlp_forward(md.ps, md.rhead, md.r_spec, fw.r_in.data(), BT,
              fw.pred_rewards.data(), &fw.r_cache);

  fw.z_tgt.resize(BT * w2m);
  mlp_forward(md.ps, md.enc, md.enc_spec, bd.targets.data(), BT,
              fw.z_tgt.data(), need_tgt_grads ? &fw.tgt_cache : nullptr);
}

template <class Real>
BaselineForward<Real> baseline_forward(const MlpBaselineModel<Real>& md,
                                       const BatchData<Real>& bd,
                                       bool need_tgt_grads = false) {
  BaselineForward<Real> fw;
  baseline_forward(md, bd, fw, need_tgt_grads);
  return fw;
}

template <class Real>
LossBreakdown baseline_loss(const BaselineForward<Real>& fw,
                            const BatchData<Real>& bd, const LossWeights& w) {
  return detail::readout_loss(fw.pred_states, fw.pred_rewards, fw.lat.data(),
                              fw.z_tgt, bd, w);
}

// Reverse sweep with plain backpropagation through time over the stepwise
// recurrence. Mirrors the spectral model's loss structure exactly.
template <class Real>
void baseline_backward(MlpBaselineModel<Real>& md, const BatchData<Real>& bd,
                       const BaselineForward<Real>& fw, const LossWeights& w,
                       bool stop_grad_targets = true,
                       double* max_step_grad_norm = nullptr) {
  const std::size_t B = fw.B, tau = fw.tau, m = md.dims.m_c,
                    a_c = md.dims.a_c, sd = md.dims.state_dim,
                    ad = md.dims.action_dim;
  const std::size_t BT = B * tau, w2m = 2 * m, uw = 2 * a_c, q = w2m + ad;
  const double inv_b = 1.0 / double(B);

  // Reverse-sweep scratch reused across calls, as in the spectral model.
  thread_local std::vector<Real> d_lat, d_x0, d_u;
  d_lat.assign(BT * w2m, Real(0));
  d_x0.assign(B * w2m, Real(0));
  d_u.assign(BT * uw, Real(0));

  {
    thread_local std::vector<Real> d_pred;
    d_pred.resize(BT * sd);
    for (std::size_t i = 0; i < BT * sd; ++i)
      d_pred[i] = Real(2.0 * w.state * inv_b *
                       (double(fw.pred_states[i]) - double(bd.targets[i])));
    mlp_backward(md.ps, md.dec, md.dec_spec, fw.dec_cache, d_pred.data(),
                 d_lat.data());
  }
  {
    thread_local std::vector<Real> d_r;
    d_r.resize(BT);
    for (std::size_t i = 0; i < BT; ++i)
      d_r[i] = Real(2.0 * w.reward * inv_b *
                    (double(fw.pred_rewards[i]) - double(bd.rewards[i])));
    thread_local std::vector<Real> d_rin;
    d_rin.assign(BT * q, Real(0));
    mlp_backward(md.ps, md.rhead, md.r_spec, fw.r_cache, d_r.data(),
                 d_rin.data());
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < tau; ++t) {
        const Real* row = d_rin.data() + (b * tau + t) * q;
        Real* dst = t == 0 ? d_x0.data() + b * w2m
                           : d_lat.data() + (b * tau + t - 1) * w2m;
        for (std::size_t i = 0; i < w2m; ++i) dst[i] += row[i];
      }
  }
  thread_local std::vector<Real> d_ztgt;
  if (!stop_grad_targets) d_ztgt.assign(BT * w2m, Real(0));
  for (std::size_t i = 0; i < BT * w2m; ++i) {
    const double r =
        2.0 * w.cons * inv_b * (double(fw.lat[i]) - double(fw.z_tgt[i]));
    d_lat[i] += Real(r);
    if (!stop_grad_targets) d_ztgt[i] = Real(-r);
  }
  if (!stop_grad_targets)
    mlp_backward(md.ps, md.enc, md.enc_spec, fw.tgt_cache, d_ztgt.data(),
                 nullptr);

  // backpropagation through time: walk steps in reverse, feeding each step's
  // input gradient into the previous latent
  double max_sq = 0;
  thread_local std::vector<Real> step_delta, d_in;
  step_delta.resize(B * w2m);
  d_in.resize(B * (w2m + uw));
  for (std::size_t t = tau; t-- > 0;) {
    for (std::size_t b = 0; b < B; ++b)
      std::memcpy(step_delta.data() + b * w2m,
                  d_lat.data() + (b * tau + t) * w2m, sizeof(Real) * w2m);
    double sq = 0;
    for (const Real v : step_delta) sq += double(v) * double(v);
    max_sq = std::max(max_sq, sq);
    std::fill(d_in.begin(), d_in.end(), Real(0));
    mlp_backward(md.ps, md.dyn, md.dyn_spec, fw.dyn_caches[t],
                 step_delta.data(), d_in.data());
    for (std::size_t b = 0; b < B; ++b) {
      const Real* row = d_in.data() + b * (w2m + uw);
      Real* dst = t == 0 ? d_x0.data() + b * w2m
                         : d_lat.data() + (b * tau + t - 1) * w2m;
      for (std::size_t i = 0; i < w2m; ++i) dst[i] += row[i];
      Real* du = d_u.data() + (b * tau + t) * uw;
      for (std::size_t i = 0; i < uw; ++i) du[i] += row[w2m + i];
    }
  }
  if (max_step_grad_norm != nullptr) *max_step_grad_norm = std::sqrt(max_sq);

  mlp_backward(md.ps, md.f, md.f_spec, fw.f_cache, d_u.data(), nullptr);
  mlp_backward(md.ps, md.enc, md.enc_spec, fw.enc_cache, d_x0.data(), nullptr);
}

}  // namespace kdyn
