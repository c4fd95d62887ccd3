#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "kdyn/errors.hpp"

namespace kdyn {

// Named flat parameter arrays with paired gradient buffers. Registration
// order is canonical: flattening, optimizer slots, and checkpoints all walk
// entries in this order.
template <class Real>
struct ParamStore {
  struct Entry {
    std::string name;
    std::vector<Real> value, grad;
    // post-update projection interval, active when lo <= hi
    double clip_lo = 1.0, clip_hi = -1.0;
    bool frozen = false;  // kept out of optimizer updates
    bool clipped() const { return clip_lo <= clip_hi; }
  };
  std::vector<Entry> entries;

  static constexpr std::size_t npos = ~std::size_t(0);

  std::size_t add(const std::string& name, std::size_t n) {
    if (find(name) != npos)
      throw ShapeError("duplicate parameter name: " + name);
    Entry e;
    e.name = name;
    e.value.assign(n, Real(0));
    e.grad.assign(n, Real(0));
    entries.push_back(std::move(e));
    return entries.size() - 1;
  }

  std::size_t find(const std::string& name) const {
    for (std::size_t i = 0; i < entries.size(); ++i)
      if (entries[i].name == name) return i;
    return npos;
  }
  Entry& at(std::size_t h) { return entries[h]; }
  const Entry& at(std::size_t h) const { return entries[h]; }
  Entry& by_name(const std::string& n) {
    const auto h = find(n);
    if (h == npos) throw ShapeError("unknown parameter: " + n);
    return entries[h];
  }
  const Entry& by_name(const std::string& n) const {
    const auto h = find(n);
    if (h == npos) throw ShapeError("unknown parameter: " + n);
    return entries[h];
  }

  void zero_grads() {
    for (auto& e : entries) std::fill(e.grad.begin(), e.grad.end(), Real(0));
  }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.value.size();
    return n;
  }

  std::vector<double> flatten() const {
    std::vector<double> v;
    v.reserve(total_size());
    for (const auto& e : entries)
      for (Real x : e.value) v.push_back(double(x));
    return v;
  }

  void unflatten(const std::vector<double>& v) {
    if (v.size() != total_size())
      throw ShapeError("unflatten: expected " + std::to_string(total_size()) +
                       " values, got " + std::to_string(v.size()));
    std::size_t p = 0;
    for (auto& e : entries)
      for (Real& x : e.value) x = Real(v[p++]);
  }

  std::vector<double> flatten_grads() const {
    std::vector<double> v;
    v.reserve(total_size());
    for (const auto& e : entries)
      for (Real x : e.grad) v.push_back(double(x));
    return v;
  }

  double grad_norm() const {
    double s = 0;
    for (const auto& e : entries)
      for (Real x : e.grad) s += double(x) * double(x);
    return std::sqrt(s);
  }
};

}  // namespace kdyn
