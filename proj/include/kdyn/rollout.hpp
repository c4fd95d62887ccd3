#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "errors.hpp"
#include "fft.hpp"
#include "parallel.hpp"
#include "spectral.hpp"

namespace kdyn {

// Batched latent trajectories in packed-real layout: each (batch, step) row is
// [re_0 .. re_{m-1} | im_0 .. im_{m-1}]. Packing a row and unpacking it back
// is the identity on bits by construction.
template <class Real>
struct LatentSeq {
  std::size_t batch = 0, steps = 0, modes = 0;
  std::vector<Real> v;  // batch * steps * 2 * modes

  static LatentSeq zeros(std::size_t b, std::size_t t, std::size_t m) {
    LatentSeq s;
    s.reset_zero(b, t, m);
    return s;
  }

  // Re-shape in place; keeps capacity so a reused slab costs one zero fill.
  void reset_zero(std::size_t b, std::size_t t, std::size_t m) {
    batch = b;
    steps = t;
    modes = m;
    v.assign(b * t * 2 * m, Real(0));
  }

  Real* row(std::size_t b, std::size_t t) {
    return v.data() + (b * steps + t) * 2 * modes;
  }
  const Real* row(std::size_t b, std::size_t t) const {
    return v.data() + (b * steps + t) * 2 * modes;
  }
  Real& re(std::size_t b, std::size_t t, std::size_t i) { return row(b, t)[i]; }
  Real& im(std::size_t b, std::size_t t, std::size_t i) {
    return row(b, t)[modes + i];
  }
  Real re(std::size_t b, std::size_t t, std::size_t i) const {
    return row(b, t)[i];
  }
  Real im(std::size_t b, std::size_t t, std::size_t i) const {
    return row(b, t)[modes + i];
  }

  std::vector<cplx> unpack(std::size_t b, std::size_t t) const {
    std::vector<cplx> z(modes);
    for (std::size_t i = 0; i < modes; ++i) z[i] = {double(re(b, t, i)), double(im(b, t, i))};
    return z;
  }
  void pack(std::size_t b, std::size_t t, const std::vector<cplx>& z) {
    if (z.size() != modes) throw ShapeError("pack: mode count mismatch");
    for (std::size_t i = 0; i < modes; ++i) {
      re(b, t, i) = Real(z[i].real());
      im(b, t, i) = Real(z[i].imag());
    }
  }
};

// One zero-order-hold step: x' = k_bar (.) x + u_emb * Lbar. All vectors are
// packed-real: x and the result have 2*m_c entries, u_emb has 2*a_c.
template <class Real>
void step(const DiscretizedOperator<Real>& op, const Real* x, const Real* u_emb,
          Real* out) {
  const std::size_t m = op.m_c, a_c = op.a_c;
  for (std::size_t i = 0; i < m; ++i) {
    const double kr = op.k_bar[i].real(), ki = op.k_bar[i].imag();
    const double xr = double(x[i]), xi = double(x[m + i]);
    double cr = 0.0, ci = 0.0;
    for (std::size_t a = 0; a < a_c; ++a) {
      const double ur = double(u_emb[a]), ui = double(u_emb[a_c + a]);
      const double lr = double(op.lbar_re[a * m + i]);
      const double li = double(op.lbar_im[a * m + i]);
      cr += ur * lr - ui * li;
      ci += ur * li + ui * lr;
    }
    out[i] = Real(kr * xr - ki * xi + cr);
    out[m + i] = Real(kr * xi + ki * xr + ci);
  }
}

// Reference recurrence x_{t+1} = k_bar (.) x_t + c_t over pre-mapped latent
// controls. c and out are single-batch slabs (1 x tau x m_c).
template <class Real>
void rollout_sequential(const DiscretizedOperator<Real>& op, const Real* x0,
                        const LatentSeq<Real>& c, LatentSeq<Real>& out) {
  const std::size_t m = op.m_c, tau = c.steps;
  if (c.modes != m || c.batch != out.batch || out.steps != tau || out.modes != m)
    throw ShapeError("rollout_sequential: slab shape mismatch");
  for (std::size_t b = 0; b < c.batch; ++b) {
    std::vector<double> xr(m), xi(m);
    for (std::size_t i = 0; i < m; ++i) {
      xr[i] = double(x0[b * 2 * m + i]);
      xi[i] = double(x0[b * 2 * m + m + i]);
    }
    for (std::size_t t = 0; t < tau; ++t) {
      for (std::size_t i = 0; i < m; ++i) {
        const double kr = op.k_bar[i].real(), ki = op.k_bar[i].imag();
        const double nr = kr * xr[i] - ki * xi[i] + double(c.re(b, t, i));
        const double ni = kr * xi[i] + ki * xr[i] + double(c.im(b, t, i));
        xr[i] = nr;
        xi[i] = ni;
        out.re(b, t, i) = Real(nr);
        out.im(b, t, i) = Real(ni);
      }
    }
  }
}

namespace detail {

// FFT spectra of the m_c kernel rows [rows 0..tau-1], lanes = m_c. conj_rows
// selects the reversed-correlation kernel used by the backward pass.
template <class Real>
void kernel_spectra(const VandermondeKernel<Real>& ker, const FftPlan<Real>& plan,
                    bool conj_rows, std::vector<Real>& kr, std::vector<Real>& ki) {
  const std::size_t m = ker.m_c, tau = ker.tau, N = plan.size();
  kr.assign(N * m, Real(0));
  ki.assign(N * m, Real(0));
  for (std::size_t j = 0; j < tau; ++j)
    for (std::size_t i = 0; i < m; ++i) {
      kr[j * m + i] = ker.pow_re[i * (tau + 1) + j];
      ki[j * m + i] = conj_rows ? -ker.pow_im[i * (tau + 1) + j]
                                : ker.pow_im[i * (tau + 1) + j];
    }
  plan.forward(kr.data(), ki.data(), m);
}

}  // namespace detail

// Horizon-parallel rollout: for every mode i,
//   out[b, t, i] = k_bar_i^{t+1} x0[b, i] + sum_{l <= t} k_bar_i^{t-l} c[b, l, i]
// with the convolution evaluated through the zero-padded FFT. Equals
// rollout_sequential up to rounding. x0 is packed (batch x 2 m_c).
template <class Real>
void rollout_parallel(const VandermondeKernel<Real>& ker, const Real* x0,
                      const LatentSeq<Real>& c, LatentSeq<Real>& out) {
  const std::size_t m = ker.m_c, tau = ker.tau, B = c.batch;
  if (c.modes != m || c.steps != tau)
    throw ShapeError("rollout_parallel: control slab shape mismatch");
  if (out.batch != B || out.steps != tau || out.modes != m)
    throw ShapeError("rollout_parallel: output slab shape mismatch");
  if (tau == 0) return;
  const std::size_t N = FftPlan<Real>::good_size(2 * tau);
  const FftPlan<Real> plan(N);
  std::vector<Real> khr, khi;
  detail::kernel_spectra(ker, plan, false, khr, khi);

  const std::size_t LB = sizeof(Real) == 4 ? 16 : 8;
  const std::size_t n_blocks = (B + LB - 1) / LB;
  ThreadPool::instance().for_items(m * n_blocks, [&](std::size_t job) {
    const std::size_t i = job / n_blocks;
    const std::size_t b0 = (job % n_blocks) * LB;
    const std::size_t lanes = std::min(LB, B - b0);
    thread_local std::vector<Real> sr, si;
    sr.assign(N * lanes, Real(0));
    si.assign(N * lanes, Real(0));
    for (std::size_t t = 0; t < tau; ++t)
      for (std::size_t l = 0; l < lanes; ++l) {
        sr[t * lanes + l] = c.re(b0 + l, t, i);
        si[t * lanes + l] = c.im(b0 + l, t, i);
      }
    plan.forward(sr.data(), si.data(), lanes);
    for (std::size_t k = 0; k < N; ++k) {
      const Real wr = khr[k * m + i], wi = khi[k * m + i];
      Real* pr = sr.data() + k * lanes;
      Real* pi = si.data() + k * lanes;
      for (std::size_t l = 0; l < lanes; ++l) {
        const Real r = pr[l] * wr - pi[l] * wi;
        const Real q = pr[l] * wi + pi[l] * wr;
        pr[l] = r;
        pi[l] = q;
      }
    }
    plan.inverse(sr.data(), si.data(), lanes);
    const Real* prow = ker.pow_re.data() + i * (tau + 1);
    const Real* qrow = ker.pow_im.data() + i * (tau + 1);
    for (std::size_t t = 0; t < tau; ++t) {
      const Real pr = prow[t + 1], qi = qrow[t + 1];
      for (std::size_t l = 0; l < lanes; ++l) {
        const Real x0r = x0[(b0 + l) * 2 * m + i];
        const Real x0i = x0[(b0 + l) * 2 * m + m + i];
        out.re(b0 + l, t, i) = sr[t * lanes + l] + pr * x0r - qi * x0i;
        out.im(b0 + l, t, i) = si[t * lanes + l] + pr * x0i + qi * x0r;
      }
    }
  });
}

template <class Real>
struct RolloutGrads {
  std::vector<Real> grad_x0;  // batch x 2 m_c, packed
  LatentSeq<Real> grad_c;     // batch x tau x m_c
  // Per-mode accumulators d L / d k_bar in the conjugate convention,
  // G_i = sum_{b,s} conj(prev[b, s, i]) * grad_c[b, s, i] with prev the
  // forward state entering step s. Callers chain these into (mu, omega,
  // log_dt) together with the l_scale path.
  std::vector<cplx> g_kbar;
};

// Adjoint of rollout_parallel through the same FFT machinery: the gradient
// w.r.t. c is the correlation of the upstream gradients with the conjugated
// kernel, evaluated as a causal convolution of the time-reversed sequence.
// outs is the forward result (needed for the k_bar accumulator); x0 as above.
// The out-parameter form reuses g's buffers across calls.
template <class Real>
void rollout_backward(const VandermondeKernel<Real>& ker,
                      const LatentSeq<Real>& grads_out, const Real* x0,
                      const LatentSeq<Real>& outs, RolloutGrads<Real>& g) {
  const std::size_t m = ker.m_c, tau = ker.tau, B = grads_out.batch;
  if (grads_out.steps != tau || grads_out.modes != m)
    throw ShapeError("rollout_backward: gradient slab shape mismatch");
  if (outs.batch != B || outs.steps != tau || outs.modes != m)
    throw ShapeError("rollout_backward: forward cache shape mismatch");
  g.grad_x0.assign(B * 2 * m, Real(0));
  g.grad_c.reset_zero(B, tau, m);
  g.g_kbar.assign(m, cplx(0.0, 0.0));
  if (tau == 0) return;

  const std::size_t N = FftPlan<Real>::good_size(2 * tau);
  const FftPlan<Real> plan(N);
  std::vector<Real> khr, khi;
  detail::kernel_spectra(ker, plan, true, khr, khi);

  const std::size_t LB = sizeof(Real) == 4 ? 16 : 8;
  const std::size_t n_blocks = (B + LB - 1) / LB;
  std::vector<std::vector<cplx>> slot_acc(kReduceSlots,
                                          std::vector<cplx>(m, cplx(0, 0)));
  ThreadPool::instance().for_slots(
      m * n_blocks, kReduceSlots,
      [&](std::size_t slot, std::size_t lo, std::size_t hi) {
        std::vector<Real> sr(N * LB), si(N * LB);
        for (std::size_t job = lo; job < hi; ++job) {
          const std::size_t i = job / n_blocks;
          const std::size_t b0 = (job % n_blocks) * LB;
          const std::size_t lanes = std::min(LB, B - b0);
          std::fill(sr.begin(), sr.begin() + N * lanes, Real(0));
          std::fill(si.begin(), si.begin() + N * lanes, Real(0));
          // time-reversed upstream gradients
          for (std::size_t t = 0; t < tau; ++t)
            for (std::size_t l = 0; l < lanes; ++l) {
              sr[t * lanes + l] = grads_out.re(b0 + l, tau - 1 - t, i);
              si[t * lanes + l] = grads_out.im(b0 + l, tau - 1 - t, i);
            }
          plan.forward(sr.data(), si.data(), lanes);
          for (std::size_t k = 0; k < N; ++k) {
            const Real wr = khr[k * m + i], wi = khi[k * m + i];
            Real* pr = sr.data() + k * lanes;
            Real* pi = si.data() + k * lanes;
            for (std::size_t l = 0; l < lanes; ++l) {
              const Real r = pr[l] * wr - pi[l] * wi;
              const Real q = pr[l] * wi + pi[l] * wr;
              pr[l] = r;
              pi[l] = q;
            }
          }
          plan.inverse(sr.data(), si.data(), lanes);
          for (std::size_t t = 0; t < tau; ++t)
            for (std::size_t l = 0; l < lanes; ++l) {
              g.grad_c.re(b0 + l, t, i) = sr[(tau - 1 - t) * lanes + l];
              g.grad_c.im(b0 + l, t, i) = si[(tau - 1 - t) * lanes + l];
            }
          const Real* prow = ker.pow_re.data() + i * (tau + 1);
          const Real* qrow = ker.pow_im.data() + i * (tau + 1);
          for (std::size_t l = 0; l < lanes; ++l) {
            const std::size_t b = b0 + l;
            // grad_x0 = sum_t conj(k_bar^{t+1}) g_t  (direct dot, no FFT)
            double ar = 0.0, ai = 0.0;
            for (std::size_t t = 0; t < tau; ++t) {
              const double pr = double(prow[t + 1]), qi = double(qrow[t + 1]);
              const double gr = double(grads_out.re(b, t, i));
              const double gi = double(grads_out.im(b, t, i));
              ar += pr * gr + qi * gi;
              ai += pr * gi - qi * gr;
            }
            g.grad_x0[b * 2 * m + i] = Real(ar);
            g.grad_x0[b * 2 * m + m + i] = Real(ai);
            // G_i += sum_s conj(prev_s) grad_c_s, prev_0 = x0, prev_s = out_{s-1}
            double accr = 0.0, acci = 0.0;
            double pvr = double(x0[b * 2 * m + i]);
            double pvi = double(x0[b * 2 * m + m + i]);
            for (std::size_t s = 0; s < tau; ++s) {
              const double dr = double(g.grad_c.re(b, s, i));
              const double di = double(g.grad_c.im(b, s, i));
              accr += pvr * dr + pvi * di;
              acci += pvr * di - pvi * dr;
              pvr = double(outs.re(b, s, i));
              pvi = double(outs.im(b, s, i));
            }
            slot_acc[slot][i] += cplx(accr, acci);
          }
        }
      });
  for (std::size_t s = 0; s < kReduceSlots; ++s)
    for (std::size_t i = 0; i < m; ++i) g.g_kbar[i] += slot_acc[s][i];
}

template <class Real>
RolloutGrads<Real> rollout_backward(const VandermondeKernel<Real>& ker,
                                    const LatentSeq<Real>& grads_out,
                                    const Real* x0,
                                    const LatentSeq<Real>& outs) {
  RolloutGrads<Real> g;
  rollout_backward(ker, grads_out, x0, outs, g);
  return g;
}

}  // namespace kdyn
