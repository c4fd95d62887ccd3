#pragma once

#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "kdyn/binio.hpp"
#include "kdyn/dataset.hpp"

namespace kdyn {

inline constexpr std::uint32_t kDatasetVersion = 1;

inline void save_dataset(const Dataset& ds, const std::string& path) {
  ds.validate();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  detail::ByteSink w(f);
  w.bytes("KDYN", 4);
  w.u32(kDatasetVersion);
  w.str(ds.descriptor);
  w.u32(ds.state_dim);
  w.u32(ds.action_dim);
  w.u32(ds.n_traj);
  w.u32(ds.T);
  w.u32(std::uint32_t(ds.train_idx.size()));
  w.u32(std::uint32_t(ds.test_idx.size()));
  for (auto i : ds.train_idx) w.u32(i);
  for (auto i : ds.test_idx) w.u32(i);
  w.f64(ds.dt);
  w.f64_array(ds.states.data(), ds.states.size());
  w.f64_array(ds.actions.data(), ds.actions.size());
  w.f64_array(ds.rewards.data(), ds.rewards.size());
  const std::uint32_t crc = w.crc();
  w.u32(crc);  // trailer; past the point anyone checks the running CRC
  f.flush();
  if (!f) throw DataError("write failed while flushing '" + path + "'");
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "'");
  detail::ByteSource r(f);
  char magic[4];
  r.bytes(magic, 4);
  if (std::string(magic, 4) != "KDYN")
    throw DataError("bad magic at byte 0: not a trajectory dataset file");
  const auto version = r.u32();
  if (version != kDatasetVersion)
    throw DataError("unsupported dataset format version " +
                    std::to_string(version));
  Dataset ds;
  ds.descriptor = r.str(1 << 16, "descriptor");
  ds.state_dim = r.u32();
  ds.action_dim = r.u32();
  ds.n_traj = r.u32();
  ds.T = r.u32();
  const std::uint64_t cells =
      std::uint64_t(ds.n_traj) * (std::uint64_t(ds.T) + 1) * ds.state_dim;
  if (ds.n_traj > (1u << 24) || ds.T > (1u << 24) || cells > (1ull << 32))
    throw DataError("implausible dataset shape at byte " +
                    std::to_string(r.offset() - 16));
  const auto n_train = r.u32();
  const auto n_test = r.u32();
  if (std::uint64_t(n_train) + n_test != ds.n_traj)
    throw DataError("split sizes disagree with trajectory count at byte " +
                    std::to_string(r.offset() - 8));
  ds.train_idx.resize(n_train);
  for (auto& i : ds.train_idx) i = r.u32();
  ds.test_idx.resize(n_test);
  for (auto& i : ds.test_idx) i = r.u32();
  ds.dt = r.f64();
  ds.states.resize(cells);
  r.f64_array(ds.states.data(), ds.states.size());
  ds.actions.resize(std::size_t(ds.n_traj) * ds.T * ds.action_dim);
  r.f64_array(ds.actions.data(), ds.actions.size());
  ds.rewards.resize(std::size_t(ds.n_traj) * ds.T);
  r.f64_array(ds.rewards.data(), ds.rewards.size());
  const std::uint32_t want = r.crc();
  const std::uint32_t got = r.trailer_u32();
  if (got != want)
    throw DataError("checksum mismatch: file is corrupt (stored " +
                    std::to_string(got) + ", computed " +
                    std::to_string(want) + ")");
  r.expect_eof();
  ds.validate();
  return ds;
}

// One JSON object per line: a metadata header, then one line per trajectory.
inline void export_jsonl(const Dataset& ds, const std::string& path) {
  ds.validate();
  std::ofstream f(path);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  nlohmann::json head{{"descriptor", ds.descriptor},
                      {"state_dim", ds.state_dim},
                      {"action_dim", ds.action_dim},
                      {"n_traj", ds.n_traj},
                      {"T", ds.T},
                      {"dt", ds.dt}};
  f << head.dump() << '\n';
  std::set<std::uint32_t> train(ds.train_idx.begin(), ds.train_idx.end());
  for (std::uint32_t traj = 0; traj < ds.n_traj; ++traj) {
    nlohmann::json row;
    row["traj"] = traj;
    row["split"] = train.count(traj) ? "train" : "test";
    auto& st = row["states"] = nlohmann::json::array();
    for (std::uint32_t t = 0; t <= ds.T; ++t) {
      const double* s = ds.state(traj, t);
      st.push_back(std::vector<double>(s, s + ds.state_dim));
    }
    auto& ac = row["actions"] = nlohmann::json::array();
    for (std::uint32_t t = 0; t < ds.T; ++t) {
      const double* a = ds.action(traj, t);
      ac.push_back(std::vector<double>(a, a + ds.action_dim));
    }
    auto& rw = row["rewards"] = nlohmann::json::array();
    for (std::uint32_t t = 0; t < ds.T; ++t) rw.push_back(ds.reward(traj, t));
    f << row.dump() << '\n';
  }
  if (!f) throw DataError("write failed for '" + path + "'");
}

}  // namespace kdyn
