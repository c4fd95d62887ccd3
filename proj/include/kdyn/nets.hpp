#pragma once

#include <cmath>
#include <cstring>
#include <type_traits>
#include <string>
#include <vector>

#include "kdyn/errors.hpp"
#include "kdyn/fastmath.hpp"
#include "kdyn/la.hpp"
#include "kdyn/params.hpp"
#include "kdyn/rng.hpp"

namespace kdyn {

enum class Act { Tanh, Relu };

inline const char* to_string(Act a) { return a == Act::Tanh ? "tanh" : "relu"; }

inline Act parse_act(const std::string& s) {
  if (s == "tanh") return Act::Tanh;
  if (s == "relu") return Act::Relu;
  throw ConfigError("unknown activation '" + s + "'");
}

// Fully connected stack: hidden layers carry the activation, the final layer
// is linear. Weights are (fan_out x fan_in) row-major.
struct MlpSpec {
  std::size_t in = 0, out = 0;
  std::vector<std::size_t> hidden;
  Act act = Act::Tanh;

  std::vector<std::size_t> dims() const {
    std::vector<std::size_t> d;
    d.push_back(in);
    for (auto h : hidden) d.push_back(h);
    d.push_back(out);
    return d;
  }
  std::size_t n_layers() const { return hidden.size() + 1; }
  std::size_t param_count() const {
    const auto d = dims();
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < d.size(); ++l) n += d[l + 1] * (d[l] + 1);
    return n;
  }
};

struct MlpHandles {
  std::vector<std::size_t> w, b;  // one per layer
};

// Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases. Weight draws
// are row-major per layer, so a seed pins every value.
template <class Real>
MlpHandles add_mlp(ParamStore<Real>& ps, const std::string& prefix,
                   const MlpSpec& spec, Rng& rng) {
  if (spec.in == 0 || spec.out == 0) throw ShapeError(prefix + ": empty layer width");
  MlpHandles h;
  const auto d = spec.dims();
  for (std::size_t l = 0; l + 1 < d.size(); ++l) {
    const std::size_t fan_in = d[l], fan_out = d[l + 1];
    const auto wh = ps.add(prefix + ".w" + std::to_string(l), fan_out * fan_in);
    const auto bh = ps.add(prefix + ".b" + std::to_string(l), fan_out);
    const double bound = std::sqrt(6.0 / double(fan_in));
    for (auto& x : ps.at(wh).value) x = Real(rng.uniform(-bound, bound));
    h.w.push_back(wh);
    h.b.push_back(bh);
  }
  return h;
}

// Input plus post-activation values of the hidden layers; enough to rebuild
// both supported activation derivatives (tanh' = 1 - y^2, relu' = [y > 0]).
// The final linear output lives in the caller's Y and is not kept here.
template <class Real>
struct MlpCache {
  std::size_t batch = 0;
  std::vector<std::vector<Real>> x;  // x[0] = input, x[l] = output of layer l-1
};

namespace detail {

// Per-thread scratch that never shrinks; slots 0/1 ping-pong forward
// activations, 2/3 ping-pong backward deltas.
template <class Real>
inline std::vector<Real>& net_scratch(int slot) {
  thread_local std::vector<Real> bufs[4];
  return bufs[slot];
}

}  // namespace detail

// Y must not alias X; hidden layers stage through the cache when given one,
// otherwise through reused per-thread scratch.
template <class Real>
void mlp_forward(const ParamStore<Real>& ps, const MlpHandles& h,
                 const MlpSpec& spec, const Real* X, std::size_t B, Real* Y,
                 MlpCache<Real>* cache = nullptr) {
  const auto d = spec.dims();
  const std::size_t L = spec.n_layers();
  if (cache) {
    cache->batch = B;
    cache->x.resize(L);
    cache->x[0].assign(X, X + B * d[0]);
  }
  const Real* cur = X;
  for (std::size_t l = 0; l < L; ++l) {
    const auto& W = ps.at(h.w[l]).value;
    const auto& bias = ps.at(h.b[l]).value;
    const std::size_t nout = B * d[l + 1];
    Real* out = Y;
    if (l + 1 < L) {
      if (cache) {
        auto& slot = cache->x[l + 1];
        slot.resize(nout);
        out = slot.data();
      } else {
        auto& slot = detail::net_scratch<Real>(int(l & 1));
        if (slot.size() < nout) slot.resize(nout);
        out = slot.data();
      }
    }
    gemm_nt(B, d[l + 1], d[l], Real(1), cur, d[l], W.data(), d[l], Real(0),
            out, d[l + 1]);
    add_row_broadcast(B, d[l + 1], out, d[l + 1], bias.data());
    if (l + 1 < L) {
      if (spec.act == Act::Tanh)
        tanh_inplace(out, nout);
      else
        for (std::size_t i = 0; i < nout; ++i)
          out[i] = out[i] > Real(0) ? out[i] : Real(0);
    }
    cur = out;
  }
}

// Accumulates parameter gradients into the store and adds the input gradient
// into dX when non-null. The cache must come from a forward pass over the
// same batch.
template <class Real>
void mlp_backward(ParamStore<Real>& ps, const MlpHandles& h, const MlpSpec& spec,
                  const MlpCache<Real>& cache, const Real* dY,
                  std::type_identity_t<Real>* dX) {
  const auto d = spec.dims();
  const std::size_t L = spec.n_layers(), B = cache.batch;
  if (cache.x.size() != L || B == 0)
    throw ShapeError("mlp_backward: cache does not match this network");
  for (std::size_t l = 0; l < L; ++l)
    if (cache.x[l].size() != B * d[l])
      throw ShapeError("mlp_backward: stale cache for layer " + std::to_string(l));

  auto& d0 = detail::net_scratch<Real>(2);
  if (d0.size() < B * d[L]) d0.resize(B * d[L]);
  std::memcpy(d0.data(), dY, sizeof(Real) * B * d[L]);
  Real* delta = d0.data();
  int next_slot = 3;
  for (std::size_t l = L; l-- > 0;) {
    const std::size_t dsz = B * d[l + 1];
    // delta holds dL/d(layer output post-activation); fold in act'
    if (l + 1 < L) {
      const auto& y = cache.x[l + 1];
      if (spec.act == Act::Tanh)
        for (std::size_t i = 0; i < dsz; ++i)
          delta[i] *= Real(1) - y[i] * y[i];
      else
        for (std::size_t i = 0; i < dsz; ++i)
          delta[i] = y[i] > Real(0) ? delta[i] : Real(0);
    }
    auto& gW = ps.at(h.w[l]).grad;
    auto& gb = ps.at(h.b[l]).grad;
    gemm_tn(d[l + 1], d[l], B, Real(1), delta, d[l + 1], cache.x[l].data(),
            d[l], Real(1), gW.data(), d[l]);
    col_sums(B, d[l + 1], delta, d[l + 1], gb.data());
    if (l > 0 || dX != nullptr) {
      auto& dn = detail::net_scratch<Real>(next_slot);
      if (dn.size() < B * d[l]) dn.resize(B * d[l]);
      gemm_nn(B, d[l], d[l + 1], Real(1), delta, d[l + 1],
              ps.at(h.w[l]).value.data(), d[l], Real(0), dn.data(), d[l]);
      if (l == 0) {
        for (std::size_t i = 0; i < B * d[0]; ++i) dX[i] += dn[i];
        return;
      }
      delta = dn.data();
      next_slot = next_slot == 3 ? 2 : 3;
    }
  }
}

}  // namespace kdyn
