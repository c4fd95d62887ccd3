#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "errors.hpp"

namespace kdyn {

using cplx = std::complex<double>;

// Iterative radix-2 DIT transform over `lanes` interleaved sequences.
// Element (k, lane) of a slab lives at re[k * lanes + lane], im likewise;
// separate planes keep the butterflies vectorizable. Power-of-two sizes only;
// callers round up with good_size().
template <class Real>
class FftPlan {
 public:
  explicit FftPlan(std::size_t n) : n_(n) {
    if (n == 0 || (n & (n - 1)) != 0)
      throw ShapeError("fft size must be a power of two, got " +
                       std::to_string(n));
    bitrev_.resize(n);
    bitrev_[0] = 0;
    std::size_t log2n = 0;
    while ((std::size_t(1) << log2n) < n) ++log2n;
    for (std::size_t k = 1; k < n; ++k)
      bitrev_[k] = std::uint32_t((bitrev_[k >> 1] >> 1) |
                                 ((k & 1) << (log2n - 1)));
    tw_re_.resize(n / 2);
    tw_im_.resize(n / 2);
    for (std::size_t j = 0; j < n / 2; ++j) {
      const double ang = -6.28318530717958647692528676656 * double(j) / double(n);
      tw_re_[j] = Real(std::cos(ang));
      tw_im_[j] = Real(std::sin(ang));
    }
  }

  std::size_t size() const { return n_; }

  static std::size_t good_size(std::size_t minimum) {
    std::size_t n = 1;
    while (n < minimum) n <<= 1;
    return n;
  }

  void forward(Real* re, Real* im, std::size_t lanes) const {
    transform(re, im, lanes, false);
  }

  // Includes the 1/n scaling.
  void inverse(Real* re, Real* im, std::size_t lanes) const {
    transform(re, im, lanes, true);
    const Real s = Real(1) / Real(n_);
    for (std::size_t i = 0; i < n_ * lanes; ++i) {
      re[i] *= s;
      im[i] *= s;
    }
  }

 private:
  void transform(Real* re, Real* im, std::size_t lanes, bool inv) const {
    const std::size_t n = n_;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t j = bitrev_[k];
      if (j > k) {
        Real* ar = re + k * lanes;
        Real* br = re + j * lanes;
        Real* ai = im + k * lanes;
        Real* bi = im + j * lanes;
        for (std::size_t l = 0; l < lanes; ++l) {
          std::swap(ar[l], br[l]);
          std::swap(ai[l], bi[l]);
        }
      }
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
      const std::size_t half = len >> 1;
      const std::size_t step = n / len;
      for (std::size_t base = 0; base < n; base += len) {
        for (std::size_t j = 0; j < half; ++j) {
          const Real wr = tw_re_[j * step];
          const Real wi = inv ? -tw_im_[j * step] : tw_im_[j * step];
          Real* ar = re + (base + j) * lanes;
          Real* ai = im + (base + j) * lanes;
          Real* br = re + (base + j + half) * lanes;
          Real* bi = im + (base + j + half) * lanes;
          for (std::size_t l = 0; l < lanes; ++l) {
            const Real xr = br[l] * wr - bi[l] * wi;
            const Real xi = br[l] * wi + bi[l] * wr;
            br[l] = ar[l] - xr;
            bi[l] = ai[l] - xi;
            ar[l] += xr;
            ai[l] += xi;
          }
        }
      }
    }
  }

  std::size_t n_;
  std::vector<std::uint32_t> bitrev_;
  std::vector<Real> tw_re_, tw_im_;
};

// Causal circular convolution of two equal-length complex sequences: both are
// zero-padded to a power of two >= 2T, multiplied in the frequency domain and
// truncated back to T. With that padding no wrap-around enters the first T
// entries, so out[t] = sum_{l <= t} ker[t - l] * u[l].
inline std::vector<cplx> circular_convolution(const std::vector<cplx>& u,
                                              const std::vector<cplx>& ker) {
  if (u.size() != ker.size())
    throw ShapeError("circular_convolution requires equal lengths");
  const std::size_t T = u.size();
  if (T == 0) return {};
  const std::size_t N = FftPlan<double>::good_size(2 * T);
  FftPlan<double> plan(N);
  std::vector<double> ur(N, 0.0), ui(N, 0.0), kr(N, 0.0), ki(N, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    ur[t] = u[t].real();
    ui[t] = u[t].imag();
    kr[t] = ker[t].real();
    ki[t] = ker[t].imag();
  }
  plan.forward(ur.data(), ui.data(), 1);
  plan.forward(kr.data(), ki.data(), 1);
  for (std::size_t k = 0; k < N; ++k) {
    const double re = ur[k] * kr[k] - ui[k] * ki[k];
    const double im = ur[k] * ki[k] + ui[k] * kr[k];
    ur[k] = re;
    ui[k] = im;
  }
  plan.inverse(ur.data(), ui.data(), 1);
  std::vector<cplx> out(T);
  for (std::size_t t = 0; t < T; ++t) out[t] = cplx(ur[t], ui[t]);
  return out;
}

}  // namespace kdyn
