#pragma once

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>

namespace kdyn {

namespace detail {

template <class Real>
struct TanhConsts;

template <>
struct TanhConsts<double> {
  using Int = std::int64_t;
  static constexpr double cap = 20.0;  // tanh rounds to 1.0 beyond this
  static constexpr double log2e = 1.4426950408889634074;
  static constexpr double ln2_hi = 6.93147180369123816490e-01;
  static constexpr double ln2_lo = 1.90821492927058770002e-10;
  static constexpr int mant = 52;
  static constexpr Int bias = 1023;
};

template <>
struct TanhConsts<float> {
  using Int = std::int32_t;
  static constexpr float cap = 10.0f;
  static constexpr float log2e = 1.44269504f;
  static constexpr float ln2_hi = 6.9314575195e-01f;
  static constexpr float ln2_lo = 1.4286067653e-06f;
  static constexpr int mant = 23;
  static constexpr Int bias = 127;
};

// expm1 on |r| <= ln2/2; Taylor series in Horner form, error below one ulp
// at the interval edge.
inline double expm1_reduced(double r) {
  double q = 1.0 / 6227020800.0;
  q = std::fma(q, r, 1.0 / 479001600.0);
  q = std::fma(q, r, 1.0 / 39916800.0);
  q = std::fma(q, r, 1.0 / 3628800.0);
  q = std::fma(q, r, 1.0 / 362880.0);
  q = std::fma(q, r, 1.0 / 40320.0);
  q = std::fma(q, r, 1.0 / 5040.0);
  q = std::fma(q, r, 1.0 / 720.0);
  q = std::fma(q, r, 1.0 / 120.0);
  q = std::fma(q, r, 1.0 / 24.0);
  q = std::fma(q, r, 1.0 / 6.0);
  q = std::fma(q, r, 0.5);
  return std::fma(q * r, r, r);
}

inline float expm1_reduced(float r) {
  float q = 1.0f / 40320.0f;
  q = std::fma(q, r, 1.0f / 5040.0f);
  q = std::fma(q, r, 1.0f / 720.0f);
  q = std::fma(q, r, 1.0f / 120.0f);
  q = std::fma(q, r, 1.0f / 24.0f);
  q = std::fma(q, r, 1.0f / 6.0f);
  q = std::fma(q, r, 0.5f);
  return std::fma(q * r, r, r);
}

}  // namespace detail

// tanh(x) = expm1(2|x|) / (expm1(2|x|) + 2), signed. Every term of expm1 is
// non-negative here so neither path cancels, and each step is a single
// rounding (fma, div, exact bit ops); vector lanes therefore match scalar
// evaluation bit for bit, wherever an element lands in a buffer.
//
// The clamp and the NaN passthrough run on the bit patterns: for
// non-negative floats IEEE order equals integer order, and any float
// select or unordered compare here leaves a branch the vectorizer
// refuses to if-convert.
template <class Real>
inline Real tanh_one(Real x) {
  using C = detail::TanhConsts<Real>;
  using Int = typename C::Int;
  constexpr Int inf_bits = (Int(2) * C::bias + 1) << C::mant;
  const Int araw = std::bit_cast<Int>(std::fabs(x));
  const Real a = std::bit_cast<Real>(std::min(araw, std::bit_cast<Int>(C::cap)));
  const Real t = Real(2) * a;
  // t >= 0, so truncation is floor; int conversion keeps the loop vectorizable
  const Int n = Int(std::fma(t, C::log2e, Real(0.5)));
  const Real k = Real(n);
  Real r = std::fma(-k, C::ln2_hi, t);
  r = std::fma(-k, C::ln2_lo, r);
  const Real p = detail::expm1_reduced(r);
  const Real s = std::bit_cast<Real>((n + C::bias) << C::mant);
  const Real em1 = std::fma(s, p, s - Real(1));
  const Real y = std::copysign(em1 / (em1 + Real(2)), x);
  const Int nan_mask = -Int(araw > inf_bits);
  const Int yb = std::bit_cast<Int>(y);
  const Int xb = std::bit_cast<Int>(x);
  return std::bit_cast<Real>((xb & nan_mask) | (yb & ~nan_mask));
}

template <class Real>
inline void tanh_inplace(Real* v, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) v[i] = tanh_one(v[i]);
}

}  // namespace kdyn
