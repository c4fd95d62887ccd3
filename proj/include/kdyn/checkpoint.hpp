#pragma once

#include <array>
#include <fstream>
#include <string>
#include <vector>

#include "kdyn/baseline.hpp"
#include "kdyn/binio.hpp"
#include "kdyn/config.hpp"
#include "kdyn/model.hpp"
#include "kdyn/training.hpp"

namespace kdyn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Everything needed to rebuild the model object and resume the run.
struct CheckpointMeta {
  ModelKind kind = ModelKind::Koopman;
  ModelDims dims;
  SpectrumScheme scheme;    // spectral model only
  std::size_t dyn_hidden = 0;  // baseline dynamics width actually used
  TrainConfig cfg;
  std::size_t next_epoch = 0;
};

inline KvMap meta_to_kv(const CheckpointMeta& m) {
  KvMap kv;
  kv.set("kind", to_string(m.kind));
  kv.set("state_dim", std::to_string(m.dims.state_dim));
  kv.set("action_dim", std::to_string(m.dims.action_dim));
  kv.set("m_c", std::to_string(m.dims.m_c));
  kv.set("a_c", std::to_string(m.dims.a_c));
  kv.set("enc_hidden", join_dims(m.dims.enc_hidden));
  kv.set("f_hidden", join_dims(m.dims.f_hidden));
  kv.set("dec_hidden", join_dims(m.dims.dec_hidden));
  kv.set("r_hidden", join_dims(m.dims.r_hidden));
  kv.set("act", to_string(m.dims.act));
  kv.set("mu_mode", to_string(m.scheme.mu_mode));
  kv.set("omega_init", to_string(m.scheme.omega_init));
  kv.set("mu_value", format_f64(m.scheme.mu_value));
  kv.set("mu_lo", format_f64(m.scheme.mu_lo));
  kv.set("mu_hi", format_f64(m.scheme.mu_hi));
  kv.set("alpha", format_f64(m.scheme.alpha));
  kv.set("dt_min", format_f64(m.scheme.dt_min));
  kv.set("dt_max", format_f64(m.scheme.dt_max));
  kv.set("dyn_hidden", std::to_string(m.dyn_hidden));
  kv.set("epochs", std::to_string(m.cfg.epochs));
  kv.set("batch", std::to_string(m.cfg.batch));
  kv.set("tau", std::to_string(m.cfg.tau));
  kv.set("lr", format_f64(m.cfg.lr));
  kv.set("beta1", format_f64(m.cfg.beta1));
  kv.set("beta2", format_f64(m.cfg.beta2));
  kv.set("eps", format_f64(m.cfg.eps));
  kv.set("seed", std::to_string(m.cfg.seed));
  kv.set("w_cons", format_f64(m.cfg.weights.cons));
  kv.set("w_state", format_f64(m.cfg.weights.state));
  kv.set("w_reward", format_f64(m.cfg.weights.reward));
  kv.set("stop_grad_targets", m.cfg.stop_grad_targets ? "true" : "false");
  kv.set("loss_blowup", format_f64(m.cfg.loss_blowup));
  kv.set("next_epoch", std::to_string(m.next_epoch));
  return kv;
}

inline CheckpointMeta meta_from_kv(const KvMap& kv) {
  CheckpointMeta m;
  ConfigReader r(kv);
  m.kind = parse_model_kind(r.get_str("kind", "koopman"));
  m.dims.state_dim = r.get_size("state_dim", 0);
  m.dims.action_dim = r.get_size("action_dim", 0);
  m.dims.m_c = r.get_size("m_c", 8);
  m.dims.a_c = r.get_size("a_c", 8);
  m.dims.enc_hidden = r.get_dims("enc_hidden", {64});
  m.dims.f_hidden = r.get_dims("f_hidden", {32});
  m.dims.dec_hidden = r.get_dims("dec_hidden", {64});
  m.dims.r_hidden = r.get_dims("r_hidden", {32});
  m.dims.act = parse_act(r.get_str("act", "tanh"));
  m.scheme.mu_mode = parse_mu_mode(r.get_str("mu_mode", "constant"));
  m.scheme.omega_init = parse_omega_init(r.get_str("omega_init", "increasing"));
  m.scheme.mu_value = r.get_f64("mu_value", -0.2);
  m.scheme.mu_lo = r.get_f64("mu_lo", -0.4);
  m.scheme.mu_hi = r.get_f64("mu_hi", -0.1);
  m.scheme.alpha = r.get_f64("alpha", 1.0);
  m.scheme.dt_min = r.get_f64("dt_min", 1e-3);
  m.scheme.dt_max = r.get_f64("dt_max", 1e-1);
  m.dyn_hidden = r.get_size("dyn_hidden", 0);
  m.cfg.epochs = r.get_size("epochs", 50);
  m.cfg.batch = r.get_size("batch", 32);
  m.cfg.tau = r.get_size("tau", 32);
  m.cfg.lr = r.get_f64("lr", 1e-3);
  m.cfg.beta1 = r.get_f64("beta1", 0.9);
  m.cfg.beta2 = r.get_f64("beta2", 0.999);
  m.cfg.eps = r.get_f64("eps", 1e-8);
  m.cfg.seed = r.get_u64("seed", 0);
  m.cfg.weights.cons = r.get_f64("w_cons", 0.001);
  m.cfg.weights.state = r.get_f64("w_state", 1.0);
  m.cfg.weights.reward = r.get_f64("w_reward", 1.0);
  m.cfg.stop_grad_targets = r.get_bool("stop_grad_targets", true);
  m.cfg.loss_blowup = r.get_f64("loss_blowup", 1e12);
  m.next_epoch = r.get_size("next_epoch", 0);
  r.finish();
  return m;
}

template <class Real>
void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const ParamStore<Real>& ps, const AdamState& adam) {
  if (adam.m.size() != ps.entries.size())
    throw ShapeError("optimizer state does not match the parameter store");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  detail::ByteSink w(f);
  w.bytes("KCKP", 4);
  w.u32(kCheckpointVersion);
  w.str(meta_to_kv(meta).to_text());
  w.u32(std::uint32_t(ps.entries.size()));
  std::vector<double> tmp;
  for (std::size_t e = 0; e < ps.entries.size(); ++e) {
    const auto& ent = ps.entries[e];
    w.str(ent.name);
    w.u64(ent.value.size());
    tmp.assign(ent.value.begin(), ent.value.end());
    w.f64_array(tmp.data(), tmp.size());
    w.f64_array(adam.m[e].data(), adam.m[e].size());
    w.f64_array(adam.v[e].data(), adam.v[e].size());
  }
  w.u64(adam.t);
  const auto rs = Rng(meta.cfg.seed, meta.next_epoch).state();
  for (auto word : rs) w.u64(word);
  const std::uint32_t crc = w.crc();
  w.u32(crc);
  f.flush();
  if (!f) throw DataError("write failed while flushing '" + path + "'");
}

struct LoadedCheckpoint {
  CheckpointMeta meta;
  std::vector<std::pair<std::string, std::vector<double>>> params;
  AdamState adam;
  std::array<std::uint64_t, 4> rng_state{};
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "'");
  detail::ByteSource r(f);
  char magic[4];
  r.bytes(magic, 4);
  if (std::string(magic, 4) != "KCKP")
    throw DataError("bad magic at byte 0: not a model checkpoint file");
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint format version " +
                    std::to_string(version));
  LoadedCheckpoint ck;
  ck.meta = meta_from_kv(KvMap::from_text(r.str(1 << 20, "metadata")));
  const auto n_entries = r.u32();
  if (n_entries > (1u << 16))
    throw DataError("implausible parameter count at byte " +
                    std::to_string(r.offset() - 4));
  ck.params.resize(n_entries);
  ck.adam.m.resize(n_entries);
  ck.adam.v.resize(n_entries);
  for (std::uint32_t e = 0; e < n_entries; ++e) {
    ck.params[e].first = r.str(1 << 12, "parameter name");
    const auto n = r.u64();
    if (n > (1ull << 28))
      throw DataError("implausible parameter size at byte " +
                      std::to_string(r.offset() - 8));
    ck.params[e].second.resize(n);
    r.f64_array(ck.params[e].second.data(), n);
    ck.adam.m[e].resize(n);
    r.f64_array(ck.adam.m[e].data(), n);
    ck.adam.v[e].resize(n);
    r.f64_array(ck.adam.v[e].data(), n);
  }
  ck.adam.t = r.u64();
  for (auto& word : ck.rng_state) word = r.u64();
  const std::uint32_t want = r.crc();
  const std::uint32_t got = r.trailer_u32();
  if (got != want)
    throw DataError("checksum mismatch: file is corrupt (stored " +
                    std::to_string(got) + ", computed " +
                    std::to_string(want) + ")");
  r.expect_eof();
  return ck;
}

// Copies loaded tensors and optimizer moments into a freshly built model.
// The store layout must match exactly; anything else means the metadata and
// the arrays disagree.
template <class Real>
void apply_checkpoint(const LoadedCheckpoint& ck, ParamStore<Real>& ps,
                      AdamState& adam) {
  if (ck.params.size() != ps.entries.size())
    throw DataError("checkpoint holds " + std::to_string(ck.params.size()) +
                    " tensors, model has " +
                    std::to_string(ps.entries.size()));
  adam.m.resize(ps.entries.size());
  adam.v.resize(ps.entries.size());
  for (std::size_t e = 0; e < ps.entries.size(); ++e) {
    auto& ent = ps.entries[e];
    const auto& [name, values] = ck.params[e];
    if (name != ent.name)
      throw DataError("checkpoint tensor '" + name +
                      "' does not match model parameter '" + ent.name + "'");
    if (values.size() != ent.value.size())
      throw DataError("checkpoint tensor '" + name + "' has " +
                      std::to_string(values.size()) + " values, model wants " +
                      std::to_string(ent.value.size()));
    for (std::size_t i = 0; i < values.size(); ++i)
      ent.value[i] = Real(values[i]);
    adam.m[e] = ck.adam.m[e];
    adam.v[e] = ck.adam.v[e];
  }
  adam.t = ck.adam.t;
}

}  // namespace kdyn
