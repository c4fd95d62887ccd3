#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "errors.hpp"
#include "fft.hpp"
#include "rng.hpp"

namespace kdyn {

enum class MuMode { Constant, Learnable };
enum class OmegaInit { IncreasingFreq, Random };

inline const char* to_string(MuMode m) {
  return m == MuMode::Constant ? "constant" : "learnable";
}
inline const char* to_string(OmegaInit o) {
  return o == OmegaInit::IncreasingFreq ? "increasing" : "random";
}

inline MuMode parse_mu_mode(const std::string& s) {
  if (s == "constant") return MuMode::Constant;
  if (s == "learnable") return MuMode::Learnable;
  throw ConfigError("unknown mu mode '" + s + "'");
}
inline OmegaInit parse_omega_init(const std::string& s) {
  if (s == "increasing") return OmegaInit::IncreasingFreq;
  if (s == "random") return OmegaInit::Random;
  throw ConfigError("unknown omega init '" + s + "'");
}

struct SpectrumScheme {
  MuMode mu_mode = MuMode::Constant;
  OmegaInit omega_init = OmegaInit::IncreasingFreq;
  double mu_value = -0.2;               // constant value and learnable init
  double mu_lo = -0.4, mu_hi = -0.1;    // learnable-mode clip window
  double alpha = 1.0;                   // increasing init: omega_j = alpha*j*pi
  double dt_min = 1e-3, dt_max = 1e-1;  // log-uniform init range for dt
};

// Continuous-time diagonal spectrum. Eigenvalues are stored as conjugate
// pairs: mode j < n_f carries mu_j + i*omega_j, mode j + n_f its conjugate,
// so the full spectrum has m_c = 2*n_f entries.
struct ComplexSpectrum {
  std::vector<double> mu, omega;  // n_f entries each
  double log_dt = 0.0;
  SpectrumScheme scheme;

  std::size_t n_freq() const { return mu.size(); }
  std::size_t n_modes() const { return 2 * mu.size(); }
  double dt() const { return std::exp(log_dt); }

  double mode_mu(std::size_t i) const { return mu[i % n_freq()]; }
  double mode_omega(std::size_t i) const {
    const double w = omega[i % n_freq()];
    return i < n_freq() ? w : -w;
  }
  cplx lambda(std::size_t i) const { return {mode_mu(i), mode_omega(i)}; }

  double mu_max() const {
    double m = mu[0];
    for (double x : mu) m = std::max(m, x);
    return m;
  }
};

// Draw order is fixed (log_dt first, then omega_0..omega_{n_f-1}) so seeds
// mean the same thing everywhere.
inline ComplexSpectrum init_spectrum(std::size_t m_c, const SpectrumScheme& sch,
                                     Rng& rng) {
  if (m_c == 0 || m_c % 2 != 0)
    throw ShapeError("complex latent dimension must be even and nonzero, got " +
                     std::to_string(m_c));
  ComplexSpectrum s;
  s.scheme = sch;
  const std::size_t n_f = m_c / 2;
  s.log_dt = rng.uniform(std::log(sch.dt_min), std::log(sch.dt_max));
  s.mu.assign(n_f, sch.mu_value);
  s.omega.resize(n_f);
  for (std::size_t j = 0; j < n_f; ++j)
    s.omega[j] = sch.omega_init == OmegaInit::IncreasingFreq
                     ? sch.alpha * double(j) * 3.14159265358979323846
                     : rng.uniform();
  return s;
}

// ---- zero-order-hold scale phi1(x) = (e^x - 1)/x ----------------------------

inline constexpr double kZohTaylorThreshold = 1e-4;

// e^z - 1 without cancellation for small z.
inline cplx expm1_cplx(cplx z) {
  const double a = z.real(), b = z.imag();
  const double sh = std::sin(0.5 * b);
  // e^a cos b - 1 = expm1(a) cos b - 2 sin^2(b/2)
  return {std::expm1(a) * std::cos(b) - 2.0 * sh * sh,
          std::exp(a) * std::sin(b)};
}

inline cplx phi1_direct(cplx x) { return expm1_cplx(x) / x; }

// Three-term series; truncation < 5e-14 relative below the 1e-4 threshold.
inline cplx phi1_taylor(cplx x) { return 1.0 + x * 0.5 + x * x * (1.0 / 6.0); }

inline cplx phi1(cplx x) {
  return std::abs(x) < kZohTaylorThreshold ? phi1_taylor(x) : phi1_direct(x);
}

// d phi1 / dx. The direct form loses ~eps/|x|^2, so the series branch extends
// to 1e-3 where its own truncation is still below 1e-14.
inline cplx dphi1(cplx x) {
  if (std::abs(x) < 1e-3)
    return 0.5 + x * (1.0 / 3.0) + x * x * 0.125 + x * x * x * (1.0 / 30.0);
  return (std::exp(x) * (x - 1.0) + 1.0) / (x * x);
}

// ---- discretized operator ---------------------------------------------------

// Result of the exact zero-order-hold step: k_bar_i = exp(dt*lambda_i) and
// l_scale_i = (k_bar_i - 1)/lambda_i; the injection matrix columns carry the
// scale so a control embedding maps to latent space with one product.
template <class Real>
struct DiscretizedOperator {
  std::size_t m_c = 0, a_c = 0;
  double dt = 0.0;
  std::vector<cplx> lambda, k_bar, l_scale;  // m_c entries each
  // scaled injection matrix (a_c x m_c), packed as separate planes
  std::vector<Real> lbar_re, lbar_im;

  cplx lbar(std::size_t a, std::size_t i) const {
    return {double(lbar_re[a * m_c + i]), double(lbar_im[a * m_c + i])};
  }
};

// l_raw planes are (a_c x m_c) row-major, independent real/imag parameters.
template <class Real>
DiscretizedOperator<Real> discretize(const ComplexSpectrum& s,
                                     const Real* l_raw_re, const Real* l_raw_im,
                                     std::size_t a_c) {
  DiscretizedOperator<Real> op;
  op.m_c = s.n_modes();
  op.a_c = a_c;
  op.dt = s.dt();
  op.lambda.resize(op.m_c);
  op.k_bar.resize(op.m_c);
  op.l_scale.resize(op.m_c);
  for (std::size_t i = 0; i < op.m_c; ++i) {
    const cplx lam = s.lambda(i);
    const cplx x = op.dt * lam;
    op.lambda[i] = lam;
    op.k_bar[i] = std::exp(x);
    op.l_scale[i] = op.dt * phi1(x);
  }
  op.lbar_re.resize(a_c * op.m_c);
  op.lbar_im.resize(a_c * op.m_c);
  for (std::size_t a = 0; a < a_c; ++a)
    for (std::size_t i = 0; i < op.m_c; ++i) {
      const cplx v = op.l_scale[i] * cplx(double(l_raw_re[a * op.m_c + i]),
                                          double(l_raw_im[a * op.m_c + i]));
      op.lbar_re[a * op.m_c + i] = Real(v.real());
      op.lbar_im[a * op.m_c + i] = Real(v.imag());
    }
  return op;
}

// ---- Vandermonde power kernel -----------------------------------------------

// lam_pows[i][j] = k_bar_i^j for j = 0..tau, built by cumulative
// multiplication (one multiply per entry, no pow calls).
template <class Real>
struct VandermondeKernel {
  std::size_t m_c = 0, tau = 0;
  std::vector<Real> pow_re, pow_im;  // m_c x (tau + 1), row-major
  std::vector<cplx> k_bar;

  cplx at(std::size_t i, std::size_t j) const {
    return {double(pow_re[i * (tau + 1) + j]), double(pow_im[i * (tau + 1) + j])};
  }
};

template <class Real>
VandermondeKernel<Real> vandermonde_from(const std::vector<cplx>& k_bar,
                                         std::size_t tau) {
  VandermondeKernel<Real> ker;
  ker.m_c = k_bar.size();
  ker.tau = tau;
  ker.k_bar = k_bar;
  ker.pow_re.resize(ker.m_c * (tau + 1));
  ker.pow_im.resize(ker.m_c * (tau + 1));
  for (std::size_t i = 0; i < ker.m_c; ++i) {
    cplx p = 1.0;
    Real* pr = ker.pow_re.data() + i * (tau + 1);
    Real* pi = ker.pow_im.data() + i * (tau + 1);
    for (std::size_t j = 0; j <= tau; ++j) {
      pr[j] = Real(p.real());
      pi[j] = Real(p.imag());
      p *= k_bar[i];
    }
  }
  return ker;
}

template <class Real>
VandermondeKernel<Real> vandermonde(const DiscretizedOperator<Real>& op,
                                    std::size_t tau) {
  return vandermonde_from<Real>(op.k_bar, tau);
}

// ---- parameter chain for the spectrum ---------------------------------------

struct SpectrumGrads {
  std::vector<double> d_mu, d_omega;  // n_f each
  double d_log_dt = 0.0;
};

// g_kbar[i] and g_lscale[i] are per-mode conjugate-convention accumulators
// (dL/d re + i dL/d im of the respective complex quantity). Chain rules:
//   d k_bar / d mu     = dt * k_bar
//   d k_bar / d omega  = +/- i dt * k_bar      (sign of the conjugate pair)
//   d k_bar / d log_dt = dt * lambda * k_bar
//   l_scale = dt * phi1(dt * lambda)
inline SpectrumGrads chain_spectrum_grads(const ComplexSpectrum& s,
                                          const std::vector<cplx>& g_kbar,
                                          const std::vector<cplx>& g_lscale) {
  const std::size_t n_f = s.n_freq(), m_c = s.n_modes();
  if (g_kbar.size() != m_c || g_lscale.size() != m_c)
    throw ShapeError("spectrum gradient accumulators must have one entry per mode");
  SpectrumGrads g;
  g.d_mu.assign(n_f, 0.0);
  g.d_omega.assign(n_f, 0.0);
  const double dt = s.dt();
  for (std::size_t i = 0; i < m_c; ++i) {
    const std::size_t j = i % n_f;
    const double sign = i < n_f ? 1.0 : -1.0;
    const cplx lam = s.lambda(i);
    const cplx x = dt * lam;
    const cplx kb = std::exp(x);
    const cplx dk_dmu = dt * kb;
    // l_scale partials: d/d lambda = dt^2 phi1'(x); d/d log_dt = dt*(phi1 + x phi1')
    const cplx p = phi1(x), dp = dphi1(x);
    const cplx dls_dlam = dt * dt * dp;
    const cplx dls_dlogdt = dt * (p + x * dp);
    const cplx dk_dlogdt = x * kb;

    const auto re_dot = [](cplx a, cplx b) {
      return a.real() * b.real() + a.imag() * b.imag();
    };
    g.d_mu[j] += re_dot(dk_dmu, g_kbar[i]) + re_dot(dls_dlam, g_lscale[i]);
    // omega enters lambda as +/- i
    g.d_omega[j] += sign * (re_dot(cplx(0, 1) * dk_dmu, g_kbar[i]) +
                            re_dot(cplx(0, 1) * dls_dlam, g_lscale[i]));
    g.d_log_dt += re_dot(dk_dlogdt, g_kbar[i]) + re_dot(dls_dlogdt, g_lscale[i]);
  }
  return g;
}

}  // namespace kdyn
