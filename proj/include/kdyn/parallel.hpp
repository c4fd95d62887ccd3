#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace kdyn {

// Reductions are always accumulated into this fixed slot grid and merged in
// slot order, so results are bit-identical for any worker count.
inline constexpr std::size_t kReduceSlots = 16;

class ThreadPool {
 public:
  static ThreadPool& instance() {
    static ThreadPool pool;
    return pool;
  }

  void set_workers(unsigned n) { workers_ = n == 0 ? 1 : n; }
  unsigned workers() const { return workers_; }

  // Calls f(slot, lo, hi) for each of `slots` contiguous ranges of [0, n).
  // The slot grid is independent of the worker count; only the assignment of
  // slots to threads varies, and slots never share output.
  template <class F>
  void for_slots(std::size_t n, std::size_t slots, F&& f) const {
    if (n == 0) return;
    slots = std::max<std::size_t>(1, std::min(slots, n));
    if (workers_ == 1 || slots == 1) {
      for (std::size_t s = 0; s < slots; ++s)
        f(s, s * n / slots, (s + 1) * n / slots);
      return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (;;) {
        const std::size_t s = next.fetch_add(1);
        if (s >= slots) return;
        f(s, s * n / slots, (s + 1) * n / slots);
      }
    };
    const std::size_t nt = std::min<std::size_t>(workers_, slots);
    std::vector<std::thread> threads;
    threads.reserve(nt - 1);
    for (std::size_t i = 1; i < nt; ++i) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
  }

  // Parallel loop over independent items (disjoint writes only).
  template <class F>
  void for_items(std::size_t n, F&& f) const {
    for_slots(n, kReduceSlots, [&](std::size_t, std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) f(i);
    });
  }

 private:
  unsigned workers_ = 1;
};

}  // namespace kdyn
