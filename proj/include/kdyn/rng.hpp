#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace kdyn {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t rotl64(std::uint64_t v, int k) {
  return (v << k) | (v >> (64 - k));
}

}  // namespace detail

// xoshiro256++ seeded through splitmix64. Self-contained so streams are
// reproducible across platforms and the whole state fits in a checkpoint.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) { reseed(seed); }

  // Derived stream, e.g. one per trajectory: independent of draw order in
  // sibling streams.
  Rng(std::uint64_t seed, std::uint64_t stream) {
    reseed(seed ^ (0x9E3779B97F4A7C15ull * (stream + 1)));
  }

  void reseed(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& w : s_) w = detail::splitmix64(x);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = detail::rotl64(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = detail::rotl64(s_[3], 45);
    return result;
  }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; draws two uniforms per call and keeps no spare, so the state
  // is exactly the four words above.
  double normal() {
    const double u1 = (double(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.28318530717958647692528676656 * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Unbiased enough for index use (bias < n / 2^64).
  std::size_t index(std::size_t n) {
    return std::size_t((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  std::array<std::uint64_t, 4> state() const { return s_; }
  void set_state(const std::array<std::uint64_t, 4>& s) { s_ = s; }

 private:
  std::array<std::uint64_t, 4> s_{};
};

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = rng.index(i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace kdyn
