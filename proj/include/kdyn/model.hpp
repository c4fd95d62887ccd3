#pragma once

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "kdyn/errors.hpp"
#include "kdyn/la.hpp"
#include "kdyn/nets.hpp"
#include "kdyn/params.hpp"
#include "kdyn/rng.hpp"
#include "kdyn/rollout.hpp"
#include "kdyn/spectral.hpp"

namespace kdyn {

struct ModelDims {
  std::size_t state_dim = 0, action_dim = 0;
  std::size_t m_c = 8;  // complex latent modes (packed-real width is 2*m_c)
  std::size_t a_c = 8;  // complex control-embedding width
  std::vector<std::size_t> enc_hidden = {64};
  std::vector<std::size_t> f_hidden = {32};
  std::vector<std::size_t> dec_hidden = {64};
  std::vector<std::size_t> r_hidden = {32};
  Act act = Act::Tanh;
};

// Sub-trajectory batch. targets hold the tau states after s0; rewards the
// tau rewards collected from s0 onward.
template <class Real>
struct BatchData {
  std::size_t batch = 0, tau = 0, state_dim = 0, action_dim = 0;
  std::vector<Real> s0;       // batch x state_dim
  std::vector<Real> actions;  // batch x tau x action_dim
  std::vector<Real> targets;  // batch x tau x state_dim
  std::vector<Real> rewards;  // batch x tau
};

struct LossWeights {
  double cons = 0.001, state = 1.0, reward = 1.0;
};

struct LossBreakdown {
  double total = 0, cons = 0, state = 0, reward = 0;
};

// Latent linear-dynamics model: encoder to packed complex latents, control
// embedding mapped through a complex injection matrix, diagonal rollout,
// decoder and reward head on the propagated latents.
template <class Real>
struct KoopmanModel {
  ModelDims dims;
  SpectrumScheme scheme;
  ParamStore<Real> ps;
  std::size_t h_mu = 0, h_omega = 0, h_logdt = 0, h_lre = 0, h_lim = 0;
  MlpSpec enc_spec, f_spec, dec_spec, r_spec;
  MlpHandles enc, f, dec, rhead;

  static KoopmanModel make(const ModelDims& dims, const SpectrumScheme& scheme,
                           Rng& rng) {
    if (dims.state_dim == 0 || dims.action_dim == 0)
      throw ShapeError("model dims need nonzero state and action sizes");
    KoopmanModel md;
    md.dims = dims;
    md.scheme = scheme;
    const std::size_t m = dims.m_c, n_f = m / 2, a_c = dims.a_c;

    const auto s0 = init_spectrum(m, scheme, rng);
    md.h_mu = md.ps.add("spectrum.mu", n_f);
    md.h_omega = md.ps.add("spectrum.omega", n_f);
    md.h_logdt = md.ps.add("spectrum.log_dt", 1);
    for (std::size_t j = 0; j < n_f; ++j) {
      md.ps.at(md.h_mu).value[j] = Real(s0.mu[j]);
      md.ps.at(md.h_omega).value[j] = Real(s0.omega[j]);
    }
    md.ps.at(md.h_logdt).value[0] = Real(s0.log_dt);
    if (scheme.mu_mode == MuMode::Constant) {
      md.ps.at(md.h_mu).frozen = true;
    } else {
      md.ps.at(md.h_mu).clip_lo = scheme.mu_lo;
      md.ps.at(md.h_mu).clip_hi = scheme.mu_hi;
    }

    md.h_lre = md.ps.add("inject.re", a_c * m);
    md.h_lim = md.ps.add("inject.im", a_c * m);
    for (auto& v : md.ps.at(md.h_lre).value) v = Real(rng.normal(0.0, 0.1));
    for (auto& v : md.ps.at(md.h_lim).value) v = Real(rng.normal(0.0, 0.1));

    md.enc_spec = {dims.state_dim, 2 * m, dims.enc_hidden, dims.act};
    md.f_spec = {dims.action_dim, 2 * a_c, dims.f_hidden, dims.act};
    md.dec_spec = {2 * m, dims.state_dim, dims.dec_hidden, dims.act};
    md.r_spec = {2 * m + dims.action_dim, 1, dims.r_hidden, dims.act};
    md.enc = add_mlp(md.ps, "enc", md.enc_spec, rng);
    md.f = add_mlp(md.ps, "ctrl", md.f_spec, rng);
    md.dec = add_mlp(md.ps, "dec", md.dec_spec, rng);
    md.rhead = add_mlp(md.ps, "reward", md.r_spec, rng);
    return md;
  }

  ComplexSpectrum spectrum() const {
    ComplexSpectrum s;
    s.scheme = scheme;
    const std::size_t n_f = dims.m_c / 2;
    s.mu.resize(n_f);
    s.omega.resize(n_f);
    for (std::size_t j = 0; j < n_f; ++j) {
      s.mu[j] = double(ps.at(h_mu).value[j]);
      s.omega[j] = double(ps.at(h_omega).value[j]);
    }
    s.log_dt = double(ps.at(h_logdt).value[0]);
    return s;
  }
};

// Everything the backward pass and the loss need from one forward sweep.
template <class Real>
struct KoopForward {
  std::size_t B = 0, tau = 0;
  ComplexSpectrum spec;
  DiscretizedOperator<Real> op;
  VandermondeKernel<Real> ker;
  std::vector<Real> x0;      // B x 2m
  std::vector<Real> u_emb;   // (B*tau) x 2a_c
  LatentSeq<Real> craw;      // pre-scale latent controls
  LatentSeq<Real> c;         // scaled latent controls
  LatentSeq<Real> outs;      // propagated latents
  std::vector<Real> pred_states;   // (B*tau) x state_dim, offsets 1..tau
  std::vector<Real> r_in;          // (B*tau) x (2m + action_dim)
  std::vector<Real> pred_rewards;  // B*tau
  std::vector<Real> z_tgt;         // (B*tau) x 2m encoded target states
  MlpCache<Real> enc_cache, f_cache, dec_cache, r_cache, tgt_cache;
};

namespace detail {

// craw = u_emb (complex rows) times the raw injection matrix, on planes.
template <class Real>
void inject_forward(const Real* U, std::size_t rows, const Real* l_re,
                    const Real* l_im, std::size_t a_c, std::size_t m,
                    LatentSeq<Real>& craw) {
  Real* C = craw.v.data();
  const std::size_t w = 2 * m, uw = 2 * a_c;
  gemm_nn(rows, m, a_c, Real(1), U, uw, l_re, m, Real(0), C, w);
  gemm_nn(rows, m, a_c, Real(-1), U + a_c, uw, l_im, m, Real(1), C, w);
  gemm_nn(rows, m, a_c, Real(1), U, uw, l_im, m, Real(0), C + m, w);
  gemm_nn(rows, m, a_c, Real(1), U + a_c, uw, l_re, m, Real(1), C + m, w);
}

}  // namespace detail

template <class Real>
void check_batch(const KoopmanModel<Real>& md, const BatchData<Real>& bd) {
  if (bd.state_dim != md.dims.state_dim || bd.action_dim != md.dims.action_dim)
    throw ShapeError("batch dims do not match the model");
  if (bd.batch == 0 || bd.tau == 0) throw ShapeError("empty batch");
  if (bd.s0.size() != bd.batch * bd.state_dim ||
      bd.actions.size() != bd.batch * bd.tau * bd.action_dim ||
      bd.targets.size() != bd.batch * bd.tau * bd.state_dim ||
      bd.rewards.size() != bd.batch * bd.tau)
    throw ShapeError("batch buffers disagree with the declared shape");
}

// need_tgt_grads keeps the target-encoder cache so the consistency term can
// propagate into the encoder when stop-gradient is off. The out-parameter
// form reuses fw's buffers across calls; the training loop leans on that.
template <class Real>
void koop_forward(const KoopmanModel<Real>& md, const BatchData<Real>& bd,
                  KoopForward<Real>& fw, bool need_tgt_grads = false) {
  check_batch(md, bd);
  const std::size_t B = bd.batch, tau = bd.tau, m = md.dims.m_c,
                    a_c = md.dims.a_c, sd = md.dims.state_dim,
                    ad = md.dims.action_dim;
  const std::size_t BT = B * tau, w2m = 2 * m;
  fw.B = B;
  fw.tau = tau;
  fw.spec = md.spectrum();
  fw.op = discretize<Real>(fw.spec, md.ps.at(md.h_lre).value.data(),
                           md.ps.at(md.h_lim).value.data(), a_c);
  fw.ker = vandermonde(fw.op, tau);

  fw.x0.resize(B * w2m);
  mlp_forward(md.ps, md.enc, md.enc_spec, bd.s0.data(), B, fw.x0.data(),
              &fw.enc_cache);

  fw.u_emb.resize(BT * 2 * a_c);
  mlp_forward(md.ps, md.f, md.f_spec, bd.actions.data(), BT, fw.u_emb.data(),
              &fw.f_cache);

  fw.craw.reset_zero(B, tau, m);
  detail::inject_forward(fw.u_emb.data(), BT, md.ps.at(md.h_lre).value.data(),
                         md.ps.at(md.h_lim).value.data(), a_c, m, fw.craw);

  fw.c.reset_zero(B, tau, m);
  for (std::size_t r = 0; r < BT; ++r) {
    const Real* src = fw.craw.v.data() + r * w2m;
    Real* dst = fw.c.v.data() + r * w2m;
    for (std::size_t i = 0; i < m; ++i) {
      const double sr = fw.op.l_scale[i].real(), si = fw.op.l_scale[i].imag();
      const double wr = double(src[i]), wi = double(src[m + i]);
      dst[i] = Real(sr * wr - si * wi);
      dst[m + i] = Real(sr * wi + si * wr);
    }
  }

  fw.outs.reset_zero(B, tau, m);
  rollout_parallel(fw.ker, fw.x0.data(), fw.c, fw.outs);

  fw.pred_states.resize(BT * sd);
  mlp_forward(md.ps, md.dec, md.dec_spec, fw.outs.v.data(), BT,
              fw.pred_states.data(), &fw.dec_cache);

  const std::size_t q = w2m + ad;
  fw.r_in.resize(BT * q);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < tau; ++t) {
      Real* row = fw.r_in.data() + (b * tau + t) * q;
      const Real* lat = t == 0 ? fw.x0.data() + b * w2m : fw.outs.row(b, t - 1);
      std::memcpy(row, lat, sizeof(Real) * w2m);
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
KoopForward<Real> koop_forward(const KoopmanModel<Real>& md,
                               const BatchData<Real>& bd,
                               bool need_tgt_grads = false) {
  KoopForward<Real> fw;
  koop_forward(md, bd, fw, need_tgt_grads);
  return fw;
}

namespace detail {

template <class Real>
double sq_diff_sum(const Real* a, const Real* b, std::size_t n) {
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = double(a[i]) - double(b[i]);
    acc += d * d;
  }
  return acc;
}

// Shared by the spectral model and the stepwise baseline: each term is a
// mean over the batch of a sum over horizon (and dims) of squared errors.
template <class Real>
LossBreakdown readout_loss(const std::vector<Real>& pred_s,
                           const std::vector<Real>& pred_r, const Real* lat,
                           const std::vector<Real>& z_tgt,
                           const BatchData<Real>& bd, const LossWeights& w) {
  const double inv_b = 1.0 / double(bd.batch);
  LossBreakdown out;
  out.state = inv_b * sq_diff_sum(pred_s.data(), bd.targets.data(), pred_s.size());
  out.reward = inv_b * sq_diff_sum(pred_r.data(), bd.rewards.data(), pred_r.size());
  out.cons = inv_b * sq_diff_sum(lat, z_tgt.data(), z_tgt.size());
  out.total = w.cons * out.cons + w.state * out.state + w.reward * out.reward;
  return out;
}

}  // namespace detail

template <class Real>
LossBreakdown koop_loss(const KoopForward<Real>& fw, const BatchData<Real>& bd,
                        const LossWeights& w) {
  return detail::readout_loss(fw.pred_states, fw.pred_rewards, fw.outs.v.data(),
                              fw.z_tgt, bd, w);
}

// Ratio of the initial-state gradient magnitude contributed by horizon step t
// to the upstream magnitude at t, against the spectral bound
// exp((t+1) dt mu_max).
struct EnvelopeStat {
  std::vector<double> ratio, bound;  // per horizon step
  double max_rel = 0;                // max ratio/bound over steps with signal
};

template <class Real>
EnvelopeStat envelope_stat(const VandermondeKernel<Real>& ker,
                           const LatentSeq<Real>& d_outs, double dt,
                           double mu_max) {
  EnvelopeStat st;
  const std::size_t tau = d_outs.steps, m = d_outs.modes, B = d_outs.batch;
  st.ratio.assign(tau, 0.0);
  st.bound.assign(tau, 0.0);
  for (std::size_t t = 0; t < tau; ++t) {
    double num = 0, den = 0;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 0; i < m; ++i) {
        const double gr = double(d_outs.re(b, t, i));
        const double gi = double(d_outs.im(b, t, i));
        const double g2 = gr * gr + gi * gi;
        const cplx p = ker.at(i, t + 1);
        num += std::norm(p) * g2;
        den += g2;
      }
    st.bound[t] = std::exp(double(t + 1) * dt * mu_max);
    if (den > 0) {
      st.ratio[t] = std::sqrt(num / den);
      st.max_rel = std::max(st.max_rel, st.ratio[t] / st.bound[t]);
    }
  }
  return st;
}

// Full reverse sweep; accumulates into md.ps grads. Returns the envelope
// statistic of the latent gradient slab when env is non-null.
template <class Real>
void koop_backward(KoopmanModel<Real>& md, const BatchData<Real>& bd,
                   const KoopForward<Real>& fw, const LossWeights& w,
                   bool stop_grad_targets = true,
                   EnvelopeStat* env = nullptr) {
  const std::size_t B = fw.B, tau = fw.tau, m = md.dims.m_c,
                    a_c = md.dims.a_c, sd = md.dims.state_dim,
                    ad = md.dims.action_dim;
  const std::size_t BT = B * tau, w2m = 2 * m, q = w2m + ad;
  const double inv_b = 1.0 / double(B);

  // Reverse-sweep scratch is reused across calls; every buffer is fully
  // written before it is read.
  thread_local LatentSeq<Real> d_outs;
  d_outs.reset_zero(B, tau, m);
  thread_local std::vector<Real> d_x0;
  d_x0.assign(B * w2m, Real(0));

  // state term through the decoder
  {
    thread_local std::vector<Real> d_pred;
    d_pred.resize(BT * sd);
    for (std::size_t i = 0; i < BT * sd; ++i)
      d_pred[i] = Real(2.0 * w.state * inv_b *
                       (double(fw.pred_states[i]) - double(bd.targets[i])));
    mlp_backward(md.ps, md.dec, md.dec_spec, fw.dec_cache, d_pred.data(),
                 d_outs.v.data());
  }

  // reward term through the reward head, split back to x0 / latents
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
        Real* dst = t == 0 ? d_x0.data() + b * w2m : d_outs.row(b, t - 1);
        for (std::size_t i = 0; i < w2m; ++i) dst[i] += row[i];
      }
  }

  // consistency term: propagated branch always, target branch when asked
  thread_local std::vector<Real> d_ztgt;
  if (!stop_grad_targets) d_ztgt.assign(BT * w2m, Real(0));
  for (std::size_t i = 0; i < BT * w2m; ++i) {
    const double r =
        2.0 * w.cons * inv_b * (double(fw.outs.v[i]) - double(fw.z_tgt[i]));
    d_outs.v[i] += Real(r);
    if (!stop_grad_targets) d_ztgt[i] = Real(-r);
  }
  if (!stop_grad_targets)
    mlp_backward(md.ps, md.enc, md.enc_spec, fw.tgt_cache, d_ztgt.data(),
                 nullptr);

  if (env != nullptr)
    *env = envelope_stat(fw.ker, d_outs, fw.spec.dt(), fw.spec.mu_max());

  // through the rollout
  thread_local RolloutGrads<Real> rg;
  rollout_backward(fw.ker, d_outs, fw.x0.data(), fw.outs, rg);
  for (std::size_t i = 0; i < B * w2m; ++i) d_x0[i] += rg.grad_x0[i];

  // latent-control scale: d craw = conj(l_scale) . d c, plus the l_scale
  // accumulator sum conj(craw) . d c per mode
  thread_local LatentSeq<Real> d_craw;
  d_craw.reset_zero(B, tau, m);
  std::vector<cplx> g_lscale(m, cplx(0, 0));
  for (std::size_t r = 0; r < BT; ++r) {
    const Real* gc = rg.grad_c.v.data() + r * w2m;
    const Real* cw = fw.craw.v.data() + r * w2m;
    Real* dc = d_craw.v.data() + r * w2m;
    for (std::size_t i = 0; i < m; ++i) {
      const double sr = fw.op.l_scale[i].real(), si = fw.op.l_scale[i].imag();
      const double gr = double(gc[i]), gi = double(gc[m + i]);
      dc[i] = Real(sr * gr + si * gi);
      dc[m + i] = Real(sr * gi - si * gr);
      const double wr = double(cw[i]), wi = double(cw[m + i]);
      g_lscale[i] += cplx(wr * gr + wi * gi, wr * gi - wi * gr);
    }
  }

  // injection matrix and control-embedding gradients (four plane products
  // each, conjugate convention)
  {
    const Real* Lre = md.ps.at(md.h_lre).value.data();
    const Real* Lim = md.ps.at(md.h_lim).value.data();
    Real* gLre = md.ps.at(md.h_lre).grad.data();
    Real* gLim = md.ps.at(md.h_lim).grad.data();
    const Real* U = fw.u_emb.data();
    const Real* GW = d_craw.v.data();
    const std::size_t uw = 2 * a_c;
    // dL_re = U_re^T GW_re + U_im^T GW_im ; dL_im = U_re^T GW_im - U_im^T GW_re
    gemm_tn(a_c, m, BT, Real(1), U, uw, GW, w2m, Real(1), gLre, m);
    gemm_tn(a_c, m, BT, Real(1), U + a_c, uw, GW + m, w2m, Real(1), gLre, m);
    gemm_tn(a_c, m, BT, Real(1), U, uw, GW + m, w2m, Real(1), gLim, m);
    gemm_tn(a_c, m, BT, Real(-1), U + a_c, uw, GW, w2m, Real(1), gLim, m);

    thread_local std::vector<Real> d_u;
    d_u.assign(BT * uw, Real(0));
    // dU_re = GW_re L_re^T + GW_im L_im^T ; dU_im = GW_im L_re^T - GW_re L_im^T
    gemm_nt(BT, a_c, m, Real(1), GW, w2m, Lre, m, Real(0), d_u.data(), uw);
    gemm_nt(BT, a_c, m, Real(1), GW + m, w2m, Lim, m, Real(1), d_u.data(), uw);
    gemm_nt(BT, a_c, m, Real(1), GW + m, w2m, Lre, m, Real(0),
            d_u.data() + a_c, uw);
    gemm_nt(BT, a_c, m, Real(-1), GW, w2m, Lim, m, Real(1), d_u.data() + a_c,
            uw);
    mlp_backward(md.ps, md.f, md.f_spec, fw.f_cache, d_u.data(), nullptr);
  }

  // spectrum chain
  {
    const auto sg = chain_spectrum_grads(fw.spec, rg.g_kbar, g_lscale);
    auto& gmu = md.ps.at(md.h_mu).grad;
    auto& gom = md.ps.at(md.h_omega).grad;
    for (std::size_t j = 0; j < sg.d_mu.size(); ++j) {
      gmu[j] += Real(sg.d_mu[j]);
      gom[j] += Real(sg.d_omega[j]);
    }
    md.ps.at(md.h_logdt).grad[0] += Real(sg.d_log_dt);
  }

  mlp_backward(md.ps, md.enc, md.enc_spec, fw.enc_cache, d_x0.data(), nullptr);
}

}  // namespace kdyn
