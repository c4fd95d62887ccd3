#pragma once

#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "kdyn/baseline.hpp"
#include "kdyn/config.hpp"
#include "kdyn/model.hpp"
#include "kdyn/rollout.hpp"
#include "kdyn/spectral.hpp"

namespace kdyn {

using ScalarFn = std::function<double(const std::vector<double>&)>;

// Central differences, one coordinate at a time.
inline std::vector<double> finite_difference(const ScalarFn& f,
                                             std::vector<double> params,
                                             double eps) {
  if (!(eps > 0)) throw ConfigError("finite difference step must be positive");
  std::vector<double> grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + eps;
    const double hi = f(params);
    params[i] = keep - eps;
    const double lo = f(params);
    params[i] = keep;
    if (!std::isfinite(hi) || !std::isfinite(lo))
      throw NumericError("finite difference oracle hit a non-finite value at coordinate " +
                         std::to_string(i));
    grad[i] = (hi - lo) / (2.0 * eps);
  }
  return grad;
}

// One row per (trial, mode); k and l are the trial's step placements,
// 1-indexed: the loss sits k steps after the start, the probed control is
// applied on step l.
struct RatioRow {
  std::size_t trial = 0, mode = 0, k = 0, l = 0;
  double state_ratio = 0, state_want = 0, state_rel = 0;
  double control_ratio = 0, control_want = 0, control_rel = 0;
};

struct ParamCheckRow {
  std::string name;
  double max_rel_err = 0;
};

struct GradReport {
  double ratio_tol = 1e-10;
  double fd_tol = 1e-5, fd_eps = 1e-5;
  std::vector<RatioRow> ratios;
  std::vector<ParamCheckRow> params;
  bool ratios_pass = true, fd_pass = true;
  RatioRow worst_ratio;   // largest of the two relative errors
  std::string worst_param;
  double worst_param_err = 0;
  bool passed() const { return ratios_pass && fd_pass; }
};

// Drives the production backward pass on pure latent dynamics and compares
// per-mode gradient norms against the decay envelope they must satisfy:
// placing a loss k steps ahead scales the initial-state gradient by
// e^{k dt mu_j} and the step-l control gradient by e^{(k-l) dt mu_j},
// exactly, since every mode evolves by multiplication with a fixed complex
// number of modulus e^{dt mu_j}.
inline GradReport verify_theorem31(const ComplexSpectrum& s, std::size_t tau,
                                   std::size_t trials, Rng& rng,
                                   double tol = 1e-10) {
  if (tau == 0) throw ConfigError("theorem check needs a positive horizon");
  const std::size_t m = s.n_modes();
  const double dt = s.dt();
  std::vector<cplx> kbar(m);
  for (std::size_t i = 0; i < m; ++i) kbar[i] = std::exp(dt * s.lambda(i));
  const auto ker = vandermonde_from<double>(kbar, tau);

  GradReport rep;
  rep.ratio_tol = tol;
  auto annulus = [&](double& re, double& im) {
    const double r = rng.uniform(0.5, 2.0);
    const double ph = rng.uniform(0.0, 6.283185307179586);
    re = r * std::cos(ph);
    im = r * std::sin(ph);
  };

  for (std::size_t trial = 0; trial < trials; ++trial) {
    const std::size_t k = 1 + rng.index(tau);  // loss k steps after start
    const std::size_t l = 1 + rng.index(k);    // probed control step
    std::vector<double> x0(2 * m);
    auto c = LatentSeq<double>::zeros(1, tau, m);
    for (std::size_t i = 0; i < m; ++i) {
      annulus(x0[i], x0[m + i]);
      for (std::size_t t = 0; t < tau; ++t) {
        double cr, ci;
        annulus(cr, ci);
        c.re(0, t, i) = cr;
        c.im(0, t, i) = ci;
      }
    }
    auto outs = LatentSeq<double>::zeros(1, tau, m);
    rollout_parallel(ker, x0.data(), c, outs);

    auto g = LatentSeq<double>::zeros(1, tau, m);
    std::vector<double> gnorm(m);
    for (std::size_t i = 0; i < m; ++i) {
      double gr, gi;
      annulus(gr, gi);
      g.re(0, k - 1, i) = gr;
      g.im(0, k - 1, i) = gi;
      gnorm[i] = std::hypot(gr, gi);
    }
    const auto grads = rollout_backward(ker, g, x0.data(), outs);

    for (std::size_t i = 0; i < m; ++i) {
      RatioRow row;
      row.trial = trial;
      row.mode = i;
      row.k = k;
      row.l = l;
      const double mu = s.mode_mu(i);
      row.state_ratio =
          std::hypot(grads.grad_x0[i], grads.grad_x0[m + i]) / gnorm[i];
      row.state_want = std::exp(double(k) * dt * mu);
      row.state_rel = std::abs(row.state_ratio - row.state_want) / row.state_want;
      row.control_ratio = std::hypot(grads.grad_c.re(0, l - 1, i),
                                     grads.grad_c.im(0, l - 1, i)) /
                          gnorm[i];
      row.control_want = std::exp(double(k - l) * dt * mu);
      row.control_rel =
          std::abs(row.control_ratio - row.control_want) / row.control_want;
      const double worst = std::max(row.state_rel, row.control_rel);
      if (worst > std::max(rep.worst_ratio.state_rel,
                           rep.worst_ratio.control_rel))
        rep.worst_ratio = row;
      if (worst > tol) rep.ratios_pass = false;
      rep.ratios.push_back(row);
    }
  }
  return rep;
}

namespace detail {

// max over entries of |analytic - fd| / max(1, |analytic|, |fd|)
inline double rel_grad_err(double analytic, double fd) {
  const double denom =
      std::max({1.0, std::abs(analytic), std::abs(fd)});
  return std::abs(analytic - fd) / denom;
}

template <class Model, class LossFn, class BackFn>
std::vector<ParamCheckRow> gradcheck_generic(Model& md, double eps,
                                             LossFn loss_at, BackFn backward) {
  const auto base = md.ps.flatten();
  backward();  // fills ps.entries[*].grad at the base point
  std::vector<std::vector<double>> analytic;
  for (const auto& ent : md.ps.entries)
    analytic.push_back(std::vector<double>(ent.grad.begin(), ent.grad.end()));

  std::vector<ParamCheckRow> rows;
  std::vector<double> flat = base;
  std::size_t off = 0;
  for (std::size_t e = 0; e < md.ps.entries.size(); ++e) {
    ParamCheckRow row;
    row.name = md.ps.entries[e].name;
    const std::size_t n = md.ps.entries[e].value.size();
    for (std::size_t i = 0; i < n; ++i) {
      const double keep = flat[off + i];
      flat[off + i] = keep + eps;
      md.ps.unflatten(flat);
      const double hi = loss_at();
      flat[off + i] = keep - eps;
      md.ps.unflatten(flat);
      const double lo = loss_at();
      flat[off + i] = keep;
      if (!std::isfinite(hi) || !std::isfinite(lo))
        throw NumericError("finite difference oracle hit a non-finite value in " +
                           row.name);
      const double fd = (hi - lo) / (2.0 * eps);
      row.max_rel_err = std::max(row.max_rel_err,
                                 rel_grad_err(analytic[e][i], fd));
    }
    off += n;
    rows.push_back(row);
  }
  md.ps.unflatten(base);
  return rows;
}

}  // namespace detail

// Finite-difference sweep over every parameter tensor of the full training
// objective. stop_grad freezes the target-encoding branch at its unperturbed
// value, matching what the analytic backward treats as constant.
template <class Real>
std::vector<ParamCheckRow> gradcheck_koopman(KoopmanModel<Real>& md,
                                             const BatchData<Real>& bd,
                                             const LossWeights& w,
                                             bool stop_grad, double eps) {
  const auto frozen = koop_forward(md, bd, false).z_tgt;
  auto loss_at = [&] {
    auto fw = koop_forward(md, bd, false);
    if (stop_grad) fw.z_tgt = frozen;
    return koop_loss(fw, bd, w).total;
  };
  auto backward = [&] {
    const auto fw = koop_forward(md, bd, !stop_grad);
    md.ps.zero_grads();
    koop_backward(md, bd, fw, w, stop_grad);
  };
  return detail::gradcheck_generic(md, eps, loss_at, backward);
}

template <class Real>
std::vector<ParamCheckRow> gradcheck_baseline(MlpBaselineModel<Real>& md,
                                              const BatchData<Real>& bd,
                                              const LossWeights& w,
                                              bool stop_grad, double eps) {
  const auto frozen = baseline_forward(md, bd, false).z_tgt;
  auto loss_at = [&] {
    auto fw = baseline_forward(md, bd, false);
    if (stop_grad) fw.z_tgt = frozen;
    return baseline_loss(fw, bd, w).total;
  };
  auto backward = [&] {
    const auto fw = baseline_forward(md, bd, !stop_grad);
    md.ps.zero_grads();
    baseline_backward(md, bd, fw, w, stop_grad);
  };
  return detail::gradcheck_generic(md, eps, loss_at, backward);
}

inline void attach_param_check(GradReport& rep,
                               std::vector<ParamCheckRow> rows, double tol,
                               double eps) {
  rep.fd_tol = tol;
  rep.fd_eps = eps;
  rep.params = std::move(rows);
  for (const auto& row : rep.params) {
    if (row.max_rel_err > rep.worst_param_err) {
      rep.worst_param_err = row.max_rel_err;
      rep.worst_param = row.name;
    }
    if (row.max_rel_err > tol) rep.fd_pass = false;
  }
}

inline void emit_gradcheck_csv(const GradReport& rep, std::ostream& os) {
  os << "kind,trial,mode,k,l,name,measured,expected,rel_err,pass\n";
  for (const auto& r : rep.ratios) {
    os << "state_ratio," << r.trial << ',' << r.mode << ',' << r.k << ','
       << r.l << ",," << format_f64(r.state_ratio) << ','
       << format_f64(r.state_want) << ',' << format_f64(r.state_rel) << ','
       << (r.state_rel <= rep.ratio_tol ? 1 : 0) << '\n';
    os << "control_ratio," << r.trial << ',' << r.mode << ',' << r.k << ','
       << r.l << ",," << format_f64(r.control_ratio) << ','
       << format_f64(r.control_want) << ',' << format_f64(r.control_rel)
       << ',' << (r.control_rel <= rep.ratio_tol ? 1 : 0) << '\n';
  }
  for (const auto& p : rep.params)
    os << "param_grad,,,,," << p.name << ',' << format_f64(p.max_rel_err)
       << ",0," << format_f64(p.max_rel_err) << ','
       << (p.max_rel_err <= rep.fd_tol ? 1 : 0) << '\n';
}

}  // namespace kdyn
