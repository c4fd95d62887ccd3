#include <catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "kdyn/spectral.hpp"

using kdyn::cplx;
using kdyn::ComplexSpectrum;
using kdyn::SpectrumScheme;

namespace {
constexpr double kPi = 3.14159265358979323846;

// Independent high-precision reference for (e^x - 1)/x: plain series, which
// converges to full double precision for |x| <= 1e-2.
cplx phi1_series(cplx x) {
  cplx term = 1.0, sum = 1.0;
  for (int k = 2; k <= 25; ++k) {
    term *= x / double(k);
    sum += term;
  }
  return sum;
}
}  // namespace

TEST_CASE("default initialization: increasing frequencies, constant decay") {
  kdyn::Rng rng(0);
  const auto s = kdyn::init_spectrum(8, SpectrumScheme{}, rng);
  REQUIRE(s.n_freq() == 4);
  REQUIRE(s.n_modes() == 8);
  CHECK(s.omega[0] == 0.0);
  CHECK(s.omega[1] == Catch::Approx(kPi).epsilon(1e-15));
  CHECK(s.omega[2] == Catch::Approx(2 * kPi).epsilon(1e-15));
  CHECK(s.omega[3] == Catch::Approx(3 * kPi).epsilon(1e-15));
  for (double m : s.mu) CHECK(m == -0.2);
}

TEST_CASE("two modes give the single frequency zero") {
  kdyn::Rng rng(0);
  const auto s = kdyn::init_spectrum(2, SpectrumScheme{}, rng);
  REQUIRE(s.omega.size() == 1);
  CHECK(s.omega[0] == 0.0);
}

TEST_CASE("modes come in conjugate pairs") {
  kdyn::Rng rng(5);
  SpectrumScheme sch;
  sch.omega_init = kdyn::OmegaInit::Random;
  const auto s = kdyn::init_spectrum(6, sch, rng);
  for (std::size_t j = 0; j < s.n_freq(); ++j) {
    CHECK(s.lambda(j) == std::conj(s.lambda(j + s.n_freq())));
    CHECK(s.mode_mu(j) == s.mode_mu(j + s.n_freq()));
  }
}

TEST_CASE("odd or zero mode counts are rejected") {
  kdyn::Rng rng(0);
  CHECK_THROWS_AS(kdyn::init_spectrum(3, SpectrumScheme{}, rng), kdyn::ShapeError);
  CHECK_THROWS_AS(kdyn::init_spectrum(0, SpectrumScheme{}, rng), kdyn::ShapeError);
}

TEST_CASE("random frequencies land in [0,1) and dt in its init range") {
  SpectrumScheme sch;
  sch.omega_init = kdyn::OmegaInit::Random;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    kdyn::Rng rng(seed);
    const auto s = kdyn::init_spectrum(16, sch, rng);
    for (double w : s.omega) {
      CHECK(w >= 0.0);
      CHECK(w < 1.0);
    }
    CHECK(s.dt() >= sch.dt_min - 1e-12);
    CHECK(s.dt() <= sch.dt_max + 1e-12);
  }
}

TEST_CASE("discretize at the zero eigenvalue gives k_bar 1 and l_scale dt") {
  ComplexSpectrum s;
  s.mu = {0.0};
  s.omega = {0.0};
  s.log_dt = std::log(0.05);
  const double l_re[2] = {1.0, 1.0}, l_im[2] = {0.0, 0.0};
  const auto op = kdyn::discretize<double>(s, l_re, l_im, 1);
  CHECK(op.k_bar[0] == cplx(1.0, 0.0));
  CHECK(op.l_scale[0].real() == Catch::Approx(0.05).epsilon(1e-15));
  CHECK(op.l_scale[0].imag() == 0.0);
}

TEST_CASE("discretize magnitude and phase for a damped oscillatory mode") {
  ComplexSpectrum s;
  s.mu = {-0.2};
  s.omega = {kPi};
  s.log_dt = std::log(0.1);
  const double l_re[2] = {0.0, 0.0}, l_im[2] = {0.0, 0.0};
  const auto op = kdyn::discretize<double>(s, l_re, l_im, 1);
  CHECK(std::abs(op.k_bar[0]) == Catch::Approx(std::exp(-0.02)).epsilon(1e-14));
  CHECK(std::arg(op.k_bar[0]) == Catch::Approx(0.1 * kPi).epsilon(1e-14));
  // conjugate mode mirrors the phase
  CHECK(std::arg(op.k_bar[1]) == Catch::Approx(-0.1 * kPi).epsilon(1e-14));
}

TEST_CASE("phi1 branches agree through the switch point") {
  // log sweep of |x| across [1e-8, 1e-2] with several phases; each branch is
  // checked against the series reference on its own side, and both branches
  // against each other near the threshold.
  for (double mag = 1e-8; mag <= 1.01e-2; mag *= std::pow(10.0, 0.25)) {
    for (int ph = 0; ph < 8; ++ph) {
      const double ang = 2.0 * kPi * ph / 8.0;
      const cplx x = mag * cplx(std::cos(ang), std::sin(ang));
      const cplx ref = phi1_series(x);
      const cplx got = kdyn::phi1(x);
      CHECK(std::abs(got - ref) <= 1e-10 * std::abs(ref));
      if (mag >= 1e-5 && mag <= 1e-3) {
        const cplx a = kdyn::phi1_taylor(x), b = kdyn::phi1_direct(x);
        CHECK(std::abs(a - b) <= 1e-8 * std::abs(ref));
      }
    }
  }
}

TEST_CASE("phi1 branch agreement at exactly the threshold magnitude") {
  for (int ph = 0; ph < 16; ++ph) {
    const double ang = 2.0 * kPi * ph / 16.0;
    const cplx x = kdyn::kZohTaylorThreshold * cplx(std::cos(ang), std::sin(ang));
    const cplx a = kdyn::phi1_taylor(x), b = kdyn::phi1_direct(x);
    CHECK(std::abs(a - b) <= 1e-10 * std::abs(b));
  }
}

TEST_CASE("dphi1 matches a central difference of phi1") {
  for (double mag : {1e-6, 1e-4, 1e-3, 1e-2, 0.5}) {
    for (int ph = 0; ph < 4; ++ph) {
      const double ang = 2.0 * kPi * ph / 4.0 + 0.3;
      const cplx x = mag * cplx(std::cos(ang), std::sin(ang));
      const double h = std::max(1e-7, 1e-6 * mag);
      const cplx fd = (phi1_series(x + h) - phi1_series(x - h)) / (2.0 * h);
      CHECK(std::abs(kdyn::dphi1(x) - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("vandermonde rows for unit k_bar are all ones") {
  const auto ker = kdyn::vandermonde_from<double>({cplx(1.0, 0.0)}, 6);
  for (std::size_t j = 0; j <= 6; ++j) {
    CHECK(ker.at(0, j) == cplx(1.0, 0.0));
  }
}

TEST_CASE("vandermonde cumulative powers match exact powers") {
  const auto ker =
      kdyn::vandermonde_from<double>({cplx(0.5, 0.0), cplx(1.0, 0.0), cplx(2.0, 0.0)}, 4);
  const double expect[3][5] = {{1, 0.5, 0.25, 0.125, 0.0625},
                               {1, 1, 1, 1, 1},
                               {1, 2, 4, 8, 16}};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j <= 4; ++j) {
      CHECK(ker.at(i, j).real() == expect[i][j]);  // exact in binary fp
      CHECK(ker.at(i, j).imag() == 0.0);
    }
}

TEST_CASE("power magnitudes track exp(j dt mu) over a long horizon") {
  ComplexSpectrum s;
  s.mu = {-0.2};
  s.omega = {2.7};
  s.log_dt = std::log(0.05);
  const double l_re[2] = {0, 0}, l_im[2] = {0, 0};
  const auto op = kdyn::discretize<double>(s, l_re, l_im, 1);
  const std::size_t tau = 1024;
  const auto ker = kdyn::vandermonde(op, tau);
  for (std::size_t j = 0; j <= tau; j += 64) {
    const double expect = std::exp(double(j) * 0.05 * -0.2);
    CHECK(std::abs(ker.at(0, j)) == Catch::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("spectrum gradient chain matches finite differences") {
  // Wrap the discretization in a scalar function of (mu, omega, log_dt) and
  // compare chain_spectrum_grads against central differences through both the
  // k_bar and l_scale accumulators.
  const auto loss = [](const ComplexSpectrum& s) {
    // arbitrary smooth functional of k_bar and l_scale
    double acc = 0.0;
    const double dt = s.dt();
    for (std::size_t i = 0; i < s.n_modes(); ++i) {
      const cplx kb = std::exp(dt * s.lambda(i));
      const cplx ls = dt * kdyn::phi1(dt * s.lambda(i));
      acc += 0.3 * kb.real() - 0.7 * kb.imag() + 1.1 * ls.real() + 0.4 * ls.imag();
    }
    return acc;
  };
  ComplexSpectrum s;
  s.mu = {-0.25, -0.15};
  s.omega = {0.9, 2.3};
  s.log_dt = std::log(0.07);

  // analytic: accumulators for dL/dk_bar and dL/dl_scale per mode are the
  // constant complex weights used in `loss`
  std::vector<cplx> g_kbar(4, cplx(0.3, -0.7)), g_ls(4, cplx(1.1, 0.4));
  const auto g = kdyn::chain_spectrum_grads(s, g_kbar, g_ls);

  const double eps = 1e-6;
  for (std::size_t j = 0; j < 2; ++j) {
    ComplexSpectrum sp = s, sm = s;
    sp.mu[j] += eps;
    sm.mu[j] -= eps;
    const double fd = (loss(sp) - loss(sm)) / (2 * eps);
    CHECK(g.d_mu[j] == Catch::Approx(fd).epsilon(1e-6));
    sp = s;
    sm = s;
    sp.omega[j] += eps;
    sm.omega[j] -= eps;
    const double fdw = (loss(sp) - loss(sm)) / (2 * eps);
    CHECK(g.d_omega[j] == Catch::Approx(fdw).epsilon(1e-6));
  }
  ComplexSpectrum sp = s, sm = s;
  sp.log_dt += eps;
  sm.log_dt -= eps;
  const double fdt = (loss(sp) - loss(sm)) / (2 * eps);
  CHECK(g.d_log_dt == Catch::Approx(fdt).epsilon(1e-6));
}
