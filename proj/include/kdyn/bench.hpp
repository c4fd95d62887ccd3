#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "kdyn/baseline.hpp"
#include "kdyn/config.hpp"
#include "kdyn/envs.hpp"
#include "kdyn/model.hpp"
#include "kdyn/training.hpp"

namespace kdyn {

struct BenchConfig {
  std::vector<std::size_t> horizons{10, 50, 100, 200, 500};
  std::size_t batch = 256;
  std::size_t warmup = 10;
  std::size_t reps = 5;
  std::size_t steps_per_rep = 3;
  bool use_f32 = false;
  std::uint64_t seed = 0;
  double lr = 1e-6;  // keeps the weights at init so every update costs the same
  std::size_t mem_budget_mb = 3584;
  std::size_t n_traj = 32;
  std::size_t traj_len = 512;
  ModelDims dims;  // state/action dims are overwritten from the bench dataset
};

struct BenchRow {
  std::string model;
  std::size_t horizon = 0, batch = 0;
  bool f32 = false;
  double its_median = 0;  // iterations/second, median of reps
  double its_mean = 0, its_std = 0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::size_t n_params_koop = 0, n_params_mlp = 0;
};

namespace detail {

// Working-set estimate for one gradient update, in bytes. Counts the
// trajectory buffers that scale with batch x horizon and the parameter
// store with gradients and moments; small fixed overheads are ignored.
inline std::size_t update_bytes(const ModelDims& d, std::size_t batch,
                                std::size_t tau, std::size_t real_bytes) {
  std::size_t width = 2 * d.state_dim + d.action_dim + 1;  // batch payload
  width += 12 * d.m_c + 4 * d.a_c;  // latent control/state sequences + grads
  auto mlp_rows = [](const std::vector<std::size_t>& h) {
    std::size_t n = 0;
    for (auto w : h) n += w;
    return n;
  };
  // activations are cached forward and revisited backward
  width += 2 * (mlp_rows(d.dec_hidden) + d.state_dim);
  width += 2 * (mlp_rows(d.r_hidden) + 1);
  width += 2 * (mlp_rows(d.f_hidden) + 2 * d.a_c);
  std::size_t n_param = 0;
  {
    std::size_t prev = d.state_dim;
    for (auto w : d.enc_hidden) n_param += prev * w + w, prev = w;
    n_param += prev * 2 * d.m_c + 2 * d.m_c;
    n_param *= 8;  // rough multiplier over the remaining heads and moments
  }
  return batch * tau * width * real_bytes + n_param * sizeof(double);
}

inline void check_mem(const BenchConfig& cfg, const ModelDims& dims,
                      std::size_t tau, std::size_t real_bytes) {
  const std::size_t need = update_bytes(dims, cfg.batch, tau, real_bytes);
  const std::size_t budget = cfg.mem_budget_mb * (std::size_t(1) << 20);
  if (need > budget)
    throw ConfigError("batch " + std::to_string(cfg.batch) + " at horizon " +
                      std::to_string(tau) + " needs about " +
                      std::to_string(need >> 20) +
                      " MiB, over the memory budget of " +
                      std::to_string(cfg.mem_budget_mb) +
                      " MiB; lower the batch or raise the budget");
}

template <class Real>
double koop_update(KoopmanModel<Real>& md, AdamState& adam,
                   const BatchData<Real>& bd, const LossWeights& w, double lr,
                   KoopForward<Real>& fw) {
  koop_forward(md, bd, fw, false);
  const auto loss = koop_loss(fw, bd, w);
  md.ps.zero_grads();
  EnvelopeStat env;
  koop_backward(md, bd, fw, w, true, &env);
  adam_step(md.ps, adam, lr, 0.9, 0.999, 1e-8);
  return loss.total;
}

template <class Real>
double baseline_update(MlpBaselineModel<Real>& md, AdamState& adam,
                       const BatchData<Real>& bd, const LossWeights& w,
                       double lr, BaselineForward<Real>& fw) {
  baseline_forward(md, bd, fw, false);
  const auto loss = baseline_loss(fw, bd, w);
  md.ps.zero_grads();
  double max_step = 0;
  baseline_backward(md, bd, fw, w, true, &max_step);
  adam_step(md.ps, adam, lr, 0.9, 0.999, 1e-8);
  return loss.total;
}

// Runs warmup + reps timed blocks of `steps` updates and fills the row's
// throughput stats. UpdateFn: () -> loss total.
template <class UpdateFn>
void time_block(const BenchConfig& cfg, UpdateFn update, BenchRow& row) {
  using clock = std::chrono::steady_clock;
  for (std::size_t i = 0; i < cfg.warmup; ++i) {
    const double l = update();
    if (!std::isfinite(l))
      throw NumericError("benchmark loss became non-finite during warmup");
  }
  std::vector<double> rates(cfg.reps);
  for (std::size_t r = 0; r < cfg.reps; ++r) {
    const auto t0 = clock::now();
    for (std::size_t s = 0; s < cfg.steps_per_rep; ++s) update();
    const auto t1 = clock::now();
    const double sec = std::chrono::duration<double>(t1 - t0).count();
    rates[r] = double(cfg.steps_per_rep) / std::max(sec, 1e-12);
  }
  std::vector<double> sorted = rates;
  std::sort(sorted.begin(), sorted.end());
  row.its_median = sorted[sorted.size() / 2];
  double mean = 0;
  for (double v : rates) mean += v;
  mean /= double(rates.size());
  double var = 0;
  for (double v : rates) var += (v - mean) * (v - mean);
  var = rates.size() > 1 ? var / double(rates.size() - 1) : 0.0;
  row.its_mean = mean;
  row.its_std = std::sqrt(var);
}

template <class Real>
BenchReport run_bench_impl(const BenchConfig& cfg, const Dataset& ds) {
  BenchReport rep;
  ModelDims dims = cfg.dims;
  dims.state_dim = ds.state_dim;
  dims.action_dim = ds.action_dim;
  const LossWeights w;
  for (const auto tau : cfg.horizons) {
    if (tau == 0) throw ConfigError("benchmark horizon must be at least 1");
    check_mem(cfg, dims, tau, sizeof(Real));
    const auto pairs = epoch_pairs(ds, tau, cfg.seed, 0);
    if (pairs.size() < cfg.batch)
      throw ConfigError("benchmark dataset yields " +
                        std::to_string(pairs.size()) +
                        " windows at horizon " + std::to_string(tau) +
                        ", fewer than the batch of " +
                        std::to_string(cfg.batch));
    const auto bd = gather_batch<Real>(ds, pairs, 0, cfg.batch, tau);

    {
      Rng rng(cfg.seed, 0xBE5C0001ull);
      auto md = KoopmanModel<Real>::make(dims, SpectrumScheme{}, rng);
      rep.n_params_koop = md.ps.total_size();
      AdamState adam = AdamState::for_store(md.ps);
      BenchRow row{to_string(ModelKind::Koopman), tau, cfg.batch,
                   sizeof(Real) == 4};
      KoopForward<Real> fw;
      time_block(cfg, [&] { return koop_update(md, adam, bd, w, cfg.lr, fw); },
                 row);
      rep.rows.push_back(row);
    }
    {
      Rng rng(cfg.seed, 0xBE5C0002ull);
      auto md = MlpBaselineModel<Real>::make(dims, 0, rng);
      rep.n_params_mlp = md.ps.total_size();
      AdamState adam = AdamState::for_store(md.ps);
      BenchRow row{to_string(ModelKind::MlpBaseline), tau, cfg.batch,
                   sizeof(Real) == 4};
      BaselineForward<Real> fw;
      time_block(cfg,
                 [&] { return baseline_update(md, adam, bd, w, cfg.lr, fw); },
                 row);
      rep.rows.push_back(row);
    }
  }
  return rep;
}

}  // namespace detail

// Measures full-update throughput (forward, backward, optimizer step) for
// both models over the configured horizon set on one shared dataset.
inline BenchReport run_bench(const BenchConfig& cfg) {
  if (cfg.horizons.empty())
    throw ConfigError("benchmark needs at least one horizon");
  if (cfg.batch == 0) throw ConfigError("benchmark batch must be at least 1");
  if (cfg.reps == 0 || cfg.steps_per_rep == 0)
    throw ConfigError("benchmark repetitions must be at least 1");
  const auto es = make_env_spec(EnvKind::Pendulum);
  const auto ds = generate_dataset(es, DataPolicy::UniformRandom, cfg.n_traj,
                                   cfg.traj_len, cfg.seed);
  if (cfg.use_f32) return detail::run_bench_impl<float>(cfg, ds);
  return detail::run_bench_impl<double>(cfg, ds);
}

// median-throughput ratio koopman/baseline per horizon, in horizon order
inline std::vector<std::pair<std::size_t, double>> speedup_ratios(
    const BenchReport& rep) {
  std::vector<std::pair<std::size_t, double>> out;
  for (std::size_t i = 0; i + 1 < rep.rows.size(); i += 2) {
    const auto& k = rep.rows[i];
    const auto& m = rep.rows[i + 1];
    out.emplace_back(k.horizon, k.its_median / m.its_median);
  }
  return out;
}

inline void emit_bench_csv(const BenchReport& rep, std::ostream& os) {
  os << "model,horizon,batch,precision,its_per_sec_median,its_per_sec_mean,"
        "its_per_sec_std\n";
  for (const auto& r : rep.rows)
    os << r.model << ',' << r.horizon << ',' << r.batch << ','
       << (r.f32 ? "f32" : "f64") << ',' << format_f64(r.its_median) << ','
       << format_f64(r.its_mean) << ',' << format_f64(r.its_std) << '\n';
}

}  // namespace kdyn
