#include <catch_amalgamated.hpp>

#include <complex>
#include <vector>

#include "kdyn/fft.hpp"
#include "kdyn/rng.hpp"

using kdyn::cplx;
using kdyn::FftPlan;

namespace {

// Quadratic reference used to pin the FFT-based path.
std::vector<cplx> naive_causal_conv(const std::vector<cplx>& u,
                                    const std::vector<cplx>& ker) {
  const std::size_t T = u.size();
  std::vector<cplx> out(T, cplx(0, 0));
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t l = 0; l <= t; ++l) out[t] += ker[t - l] * u[l];
  return out;
}

std::vector<cplx> naive_dft(const std::vector<cplx>& x, bool inverse) {
  const std::size_t n = x.size();
  std::vector<cplx> out(n, cplx(0, 0));
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      const double ang = sign * 2.0 * 3.14159265358979323846 * double(k * j) / double(n);
      out[k] += x[j] * cplx(std::cos(ang), std::sin(ang));
    }
    if (inverse) out[k] /= double(n);
  }
  return out;
}

}  // namespace

TEST_CASE("good_size rounds up to the next power of two") {
  CHECK(FftPlan<double>::good_size(1) == 1);
  CHECK(FftPlan<double>::good_size(2) == 2);
  CHECK(FftPlan<double>::good_size(3) == 4);
  CHECK(FftPlan<double>::good_size(514) == 1024);
  CHECK(FftPlan<double>::good_size(1024) == 1024);
}

TEST_CASE("plan rejects non-power-of-two sizes") {
  CHECK_THROWS_AS(FftPlan<double>(12), kdyn::ShapeError);
  CHECK_THROWS_AS(FftPlan<double>(0), kdyn::ShapeError);
}

TEST_CASE("forward transform matches the quadratic DFT") {
  kdyn::Rng rng(7);
  const std::size_t n = 16;
  std::vector<cplx> x(n);
  for (auto& z : x) z = {rng.normal(), rng.normal()};
  std::vector<double> re(n), im(n);
  for (std::size_t i = 0; i < n; ++i) {
    re[i] = x[i].real();
    im[i] = x[i].imag();
  }
  FftPlan<double> plan(n);
  plan.forward(re.data(), im.data(), 1);
  const auto ref = naive_dft(x, false);
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(re[i] == Catch::Approx(ref[i].real()).margin(1e-12));
    CHECK(im[i] == Catch::Approx(ref[i].imag()).margin(1e-12));
  }
}

TEST_CASE("forward then inverse is the identity, any lane count") {
  kdyn::Rng rng(11);
  for (std::size_t n : {1u, 2u, 8u, 64u, 1024u}) {
    for (std::size_t lanes : {1u, 3u, 8u}) {
      std::vector<double> re(n * lanes), im(n * lanes), re0, im0;
      for (auto& v : re) v = rng.normal();
      for (auto& v : im) v = rng.normal();
      re0 = re;
      im0 = im;
      FftPlan<double> plan(n);
      plan.forward(re.data(), im.data(), lanes);
      plan.inverse(re.data(), im.data(), lanes);
      for (std::size_t i = 0; i < n * lanes; ++i) {
        CHECK(re[i] == Catch::Approx(re0[i]).margin(1e-11));
        CHECK(im[i] == Catch::Approx(im0[i]).margin(1e-11));
      }
    }
  }
}

TEST_CASE("lane-blocked transform equals per-sequence transforms") {
  kdyn::Rng rng(13);
  const std::size_t n = 32, lanes = 5;
  std::vector<double> re(n * lanes), im(n * lanes);
  for (auto& v : re) v = rng.normal();
  for (auto& v : im) v = rng.normal();
  FftPlan<double> plan(n);
  // reference: transform each lane alone
  std::vector<std::vector<double>> rre(lanes, std::vector<double>(n)),
      rim(lanes, std::vector<double>(n));
  for (std::size_t l = 0; l < lanes; ++l)
    for (std::size_t k = 0; k < n; ++k) {
      rre[l][k] = re[k * lanes + l];
      rim[l][k] = im[k * lanes + l];
    }
  for (std::size_t l = 0; l < lanes; ++l)
    plan.forward(rre[l].data(), rim[l].data(), 1);
  plan.forward(re.data(), im.data(), lanes);
  for (std::size_t l = 0; l < lanes; ++l)
    for (std::size_t k = 0; k < n; ++k) {
      CHECK(re[k * lanes + l] == Catch::Approx(rre[l][k]).margin(1e-12));
      CHECK(im[k * lanes + l] == Catch::Approx(rim[l][k]).margin(1e-12));
    }
}

TEST_CASE("causal convolution with a unit impulse kernel is the identity") {
  kdyn::Rng rng(3);
  std::vector<cplx> u(9), ker(9, cplx(0, 0));
  for (auto& z : u) z = {rng.normal(), rng.normal()};
  ker[0] = 1.0;
  const auto out = kdyn::circular_convolution(u, ker);
  for (std::size_t t = 0; t < u.size(); ++t) {
    CHECK(out[t].real() == Catch::Approx(u[t].real()).margin(1e-13));
    CHECK(out[t].imag() == Catch::Approx(u[t].imag()).margin(1e-13));
  }
}

TEST_CASE("causal convolution matches the quadratic reference") {
  kdyn::Rng rng(23);
  for (std::size_t T : {1u, 2u, 7u, 64u, 257u}) {
    std::vector<cplx> u(T), ker(T);
    for (auto& z : u) z = {rng.normal(), rng.normal()};
    for (auto& z : ker) z = {rng.normal(), rng.normal()};
    const auto fast = kdyn::circular_convolution(u, ker);
    const auto ref = naive_causal_conv(u, ker);
    double max_abs = 0.0, max_err = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      max_abs = std::max(max_abs, std::abs(ref[t]));
      max_err = std::max(max_err, std::abs(ref[t] - fast[t]));
    }
    CHECK(max_err <= 1e-10 * std::max(1.0, max_abs));
  }
}

TEST_CASE("convolution rejects mismatched lengths") {
  std::vector<cplx> u(4), ker(5);
  CHECK_THROWS_AS(kdyn::circular_convolution(u, ker), kdyn::ShapeError);
}
