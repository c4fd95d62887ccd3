#include <catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "kdyn/checkpoint.hpp"
#include "kdyn/dataset_io.hpp"
#include "kdyn/envs.hpp"
#include "kdyn/eval.hpp"

using namespace kdyn;

namespace {

std::string tmp_path(const char* stem) {
  return std::string("io_test_") + stem + ".bin";
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary);
  f.write(bytes.data(), std::streamsize(bytes.size()));
}

}  // namespace

TEST_CASE("dataset files round-trip bit exactly") {
  auto es = make_env_spec(EnvKind::Pendulum);
  auto ds = generate_dataset(es, DataPolicy::SinusoidSweep, 6, 25, 31);
  const auto path = tmp_path("ds_roundtrip");
  save_dataset(ds, path);
  const auto back = load_dataset(path);
  CHECK(back.descriptor == ds.descriptor);
  CHECK(back.state_dim == ds.state_dim);
  CHECK(back.action_dim == ds.action_dim);
  CHECK(back.n_traj == ds.n_traj);
  CHECK(back.T == ds.T);
  CHECK(back.dt == ds.dt);
  CHECK(back.train_idx == ds.train_idx);
  CHECK(back.test_idx == ds.test_idx);
  CHECK(back.states == ds.states);
  CHECK(back.actions == ds.actions);
  CHECK(back.rewards == ds.rewards);
  std::remove(path.c_str());
}

TEST_CASE("dataset header is little-endian with fixed magic") {
  auto es = make_env_spec(EnvKind::Duffing);
  auto ds = generate_dataset(es, DataPolicy::UniformRandom, 3, 8, 1);
  const auto path = tmp_path("ds_magic");
  save_dataset(ds, path);
  const auto bytes = slurp(path);
  REQUIRE(bytes.size() > 12);
  CHECK(bytes.substr(0, 4) == "KDYN");
  CHECK((unsigned char)bytes[4] == 1);  // version 1, low byte first
  CHECK((unsigned char)bytes[5] == 0);
  CHECK((unsigned char)bytes[6] == 0);
  CHECK((unsigned char)bytes[7] == 0);
  std::remove(path.c_str());
}

TEST_CASE("damaged dataset files are rejected with an offset") {
  auto es = make_env_spec(EnvKind::Duffing);
  auto ds = generate_dataset(es, DataPolicy::UniformRandom, 4, 10, 2);
  const auto path = tmp_path("ds_damage");
  save_dataset(ds, path);
  const auto bytes = slurp(path);

  SECTION("truncated file") {
    for (std::size_t keep : {std::size_t(3), std::size_t(9),
                             bytes.size() / 2, bytes.size() - 2}) {
      spit(path, bytes.substr(0, keep));
      CHECK_THROWS_MATCHES(load_dataset(path), DataError,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("truncated")));
    }
  }
  SECTION("flipped payload byte fails the checksum") {
    auto bad = bytes;
    bad[bytes.size() / 2] = char(bad[bytes.size() / 2] ^ 0x40);
    spit(path, bad);
    CHECK_THROWS_MATCHES(load_dataset(path), DataError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("checksum")));
  }
  SECTION("trailing junk is rejected") {
    spit(path, bytes + "x");
    CHECK_THROWS_MATCHES(load_dataset(path), DataError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("trailing")));
  }
  SECTION("wrong magic") {
    auto bad = bytes;
    bad[0] = 'X';
    spit(path, bad);
    CHECK_THROWS_MATCHES(load_dataset(path), DataError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("magic")));
  }
  std::remove(path.c_str());
}

TEST_CASE("jsonl export mirrors the dataset") {
  auto es = make_env_spec(EnvKind::Linear4D);
  auto ds = generate_dataset(es, DataPolicy::UniformRandom, 5, 6, 3);
  const auto path = tmp_path("ds_jsonl");
  export_jsonl(ds, path);
  std::ifstream f(path);
  std::string line;
  REQUIRE(std::getline(f, line));
  const auto head = nlohmann::json::parse(line);
  CHECK(head["n_traj"] == 5);
  CHECK(head["T"] == 6);
  CHECK(head["dt"] == ds.dt);
  std::size_t rows = 0, train_rows = 0;
  while (std::getline(f, line)) {
    const auto row = nlohmann::json::parse(line);
    const std::uint32_t traj = row["traj"];
    if (row["split"] == "train") ++train_rows;
    REQUIRE(row["states"].size() == ds.T + 1);
    REQUIRE(row["actions"].size() == ds.T);
    REQUIRE(row["rewards"].size() == ds.T);
    CHECK(double(row["states"][2][1]) == ds.state(traj, 2)[1]);
    CHECK(double(row["rewards"][3]) == ds.reward(traj, 3));
    ++rows;
  }
  CHECK(rows == 5);
  CHECK(train_rows == ds.train_idx.size());
  std::remove(path.c_str());
}

namespace {

CheckpointMeta demo_meta(ModelKind kind, const ModelDims& dims,
                         std::size_t dyn_hidden) {
  CheckpointMeta meta;
  meta.kind = kind;
  meta.dims = dims;
  meta.scheme.mu_mode = MuMode::Learnable;
  meta.scheme.mu_value = -0.17;
  meta.dyn_hidden = dyn_hidden;
  meta.cfg.epochs = 9;
  meta.cfg.batch = 16;
  meta.cfg.tau = 5;
  meta.cfg.lr = 2.5e-4;
  meta.cfg.seed = 77;
  meta.cfg.weights.cons = 0.003;
  meta.next_epoch = 4;
  return meta;
}

}  // namespace

TEST_CASE("checkpoints restore parameters and optimizer state bit exactly") {
  ModelDims dims;
  dims.state_dim = 3;
  dims.action_dim = 1;
  dims.m_c = 4;
  dims.a_c = 2;
  dims.enc_hidden = {10};
  dims.f_hidden = {6};
  dims.dec_hidden = {10};
  dims.r_hidden = {6};
  Rng rng(5);
  auto md = KoopmanModel<double>::make(dims, SpectrumScheme{}, rng);
  auto adam = AdamState::for_store(md.ps);
  // churn the optimizer so moments are nonzero
  for (int step = 0; step < 3; ++step) {
    for (auto& ent : md.ps.entries)
      for (std::size_t i = 0; i < ent.grad.size(); ++i)
        ent.grad[i] = rng.normal();
    adam_step(md.ps, adam, 1e-3, 0.9, 0.999, 1e-8);
  }

  const auto meta = demo_meta(ModelKind::Koopman, dims, 0);
  const auto path = tmp_path("ckpt_roundtrip");
  save_checkpoint(path, meta, md.ps, adam);
  const auto ck = load_checkpoint(path);

  CHECK(ck.meta.kind == ModelKind::Koopman);
  CHECK(ck.meta.dims.state_dim == 3);
  CHECK(ck.meta.dims.enc_hidden == std::vector<std::size_t>{10});
  CHECK(ck.meta.scheme.mu_mode == MuMode::Learnable);
  CHECK(ck.meta.scheme.mu_value == -0.17);
  CHECK(ck.meta.cfg.lr == 2.5e-4);
  CHECK(ck.meta.cfg.weights.cons == 0.003);
  CHECK(ck.meta.cfg.seed == 77);
  CHECK(ck.meta.next_epoch == 4);
  CHECK(ck.rng_state == Rng(77, 4).state());

  Rng other(999);
  auto md2 = KoopmanModel<double>::make(ck.meta.dims, ck.meta.scheme, other);
  auto adam2 = AdamState::for_store(md2.ps);
  apply_checkpoint(ck, md2.ps, adam2);
  CHECK(md2.ps.flatten() == md.ps.flatten());
  CHECK(adam2.t == adam.t);
  CHECK(adam2.m == adam.m);
  CHECK(adam2.v == adam.v);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint refuses a mismatched model") {
  ModelDims small;
  small.state_dim = 2;
  small.action_dim = 1;
  small.m_c = 4;
  small.a_c = 2;
  small.enc_hidden = {4};
  small.f_hidden = {4};
  small.dec_hidden = {4};
  small.r_hidden = {4};
  Rng rng(6);
  auto md = MlpBaselineModel<double>::make(small, 0, rng);
  auto adam = AdamState::for_store(md.ps);
  const auto path = tmp_path("ckpt_mismatch");
  save_checkpoint(path, demo_meta(ModelKind::MlpBaseline, small, md.dyn_hidden),
                  md.ps, adam);
  const auto ck = load_checkpoint(path);

  ModelDims big = small;
  big.m_c = 8;
  Rng rng2(7);
  auto md2 = MlpBaselineModel<double>::make(big, 0, rng2);
  auto adam2 = AdamState::for_store(md2.ps);
  CHECK_THROWS_AS(apply_checkpoint(ck, md2.ps, adam2), DataError);
  std::remove(path.c_str());
}

TEST_CASE("training resumed from a checkpoint file matches an unbroken run") {
  auto es = make_env_spec(EnvKind::Duffing);
  auto ds = generate_dataset(es, DataPolicy::UniformRandom, 8, 30, 19);
  ModelDims dims;
  dims.state_dim = ds.state_dim;
  dims.action_dim = ds.action_dim;
  dims.m_c = 4;
  dims.a_c = 2;
  dims.enc_hidden = {10};
  dims.f_hidden = {6};
  dims.dec_hidden = {10};
  dims.r_hidden = {6};
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch = 16;
  cfg.tau = 5;
  cfg.seed = 23;

  Rng rng_a(81);
  auto md_a = KoopmanModel<double>::make(dims, SpectrumScheme{}, rng_a);
  auto adam_a = AdamState::for_store(md_a.ps);
  const auto res_a = train_koopman(md_a, ds, cfg, adam_a);
  REQUIRE(res_a.status == TrainStatus::Completed);

  // same init, stop after 2 epochs, checkpoint to disk
  Rng rng_b(81);
  auto md_b = KoopmanModel<double>::make(dims, SpectrumScheme{}, rng_b);
  auto adam_b = AdamState::for_store(md_b.ps);
  TrainConfig half = cfg;
  half.epochs = 2;
  REQUIRE(train_koopman(md_b, ds, half, adam_b).status ==
          TrainStatus::Completed);
  CheckpointMeta meta;
  meta.kind = ModelKind::Koopman;
  meta.dims = dims;
  meta.cfg = cfg;
  meta.next_epoch = 2;
  const auto path = tmp_path("ckpt_resume");
  save_checkpoint(path, meta, md_b.ps, adam_b);

  // cold process: rebuild from the file alone
  const auto ck = load_checkpoint(path);
  Rng rng_c(4242);
  auto md_c = KoopmanModel<double>::make(ck.meta.dims, ck.meta.scheme, rng_c);
  auto adam_c = AdamState::for_store(md_c.ps);
  apply_checkpoint(ck, md_c.ps, adam_c);
  const auto res_c =
      train_koopman(md_c, ds, ck.meta.cfg, adam_c, ck.meta.next_epoch);
  REQUIRE(res_c.status == TrainStatus::Completed);

  CHECK(md_c.ps.flatten() == md_a.ps.flatten());
  REQUIRE(res_c.history.size() == 2);
  CHECK(res_c.history[0].total == res_a.history[2].total);
  CHECK(res_c.history[1].total == res_a.history[3].total);
  CHECK(res_c.history[0].grad_norm_max == res_a.history[2].grad_norm_max);
  std::remove(path.c_str());
}

TEST_CASE("evaluation buckets cumulative error over the horizon") {
  auto es = make_env_spec(EnvKind::Linear4D);
  auto ds = generate_dataset(es, DataPolicy::UniformRandom, 10, 24, 29);
  ModelDims dims;
  dims.state_dim = ds.state_dim;
  dims.action_dim = ds.action_dim;
  dims.m_c = 8;
  dims.a_c = 4;
  dims.enc_hidden = {24};
  dims.f_hidden = {12};
  dims.dec_hidden = {24};
  dims.r_hidden = {12};
  Rng rng(3);
  auto md = KoopmanModel<double>::make(dims, SpectrumScheme{}, rng);

  EvalConfig ec;
  ec.horizon = 12;
  ec.buckets = {1, 4, 12};
  const auto before = eval_koopman(md, ds, ec);
  CHECK(before.n_windows == ds.test_idx.size() * 2);  // 24 / 12
  REQUIRE(before.state_mse.size() == 3);
  for (double v : before.state_mse) CHECK(v > 0);

  SECTION("internal batching does not change the numbers") {
    EvalConfig tiny = ec;
    tiny.batch = 3;
    const auto again = eval_koopman(md, ds, tiny);
    CHECK(again.state_mse == before.state_mse);
    CHECK(again.state_nmse == before.state_nmse);
    CHECK(again.reward_mse == before.reward_mse);
  }

  SECTION("a few training epochs beat the random initialization") {
    auto adam = AdamState::for_store(md.ps);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch = 32;
    cfg.tau = 8;
    cfg.seed = 11;
    REQUIRE(train_koopman(md, ds, cfg, adam).status == TrainStatus::Completed);
    const auto after = eval_koopman(md, ds, ec);
    CHECK(after.state_mse[0] < before.state_mse[0]);
    CHECK(after.state_mse[2] < before.state_mse[2]);
    CHECK(after.state_nmse[2] < before.state_nmse[2]);
  }

  SECTION("bucket and horizon validation") {
    EvalConfig bad = ec;
    bad.horizon = ds.T + 1;
    CHECK_THROWS_AS(eval_koopman(md, ds, bad), ConfigError);
    bad = ec;
    bad.buckets = {0};
    CHECK_THROWS_AS(eval_koopman(md, ds, bad), ConfigError);
    bad = ec;
    bad.buckets = {13};
    CHECK_THROWS_AS(eval_koopman(md, ds, bad), ConfigError);
  }
}

TEST_CASE("eval cross-checked against a single-window replay") {
  auto es = make_env_spec(EnvKind::Duffing);
  auto ds = generate_dataset(es, DataPolicy::SinusoidSweep, 6, 10, 37);
  ModelDims dims;
  dims.state_dim = ds.state_dim;
  dims.action_dim = ds.action_dim;
  dims.m_c = 4;
  dims.a_c = 2;
  dims.enc_hidden = {8};
  dims.f_hidden = {6};
  dims.dec_hidden = {8};
  dims.r_hidden = {6};
  Rng rng(9);
  auto md = MlpBaselineModel<double>::make(dims, 0, rng);

  EvalConfig ec;
  ec.horizon = 5;
  ec.buckets = {1, 3, 5};
  const auto rep = eval_baseline(md, ds, ec);

  // independent accumulation, one window at a time
  std::vector<SamplePair> windows;
  for (auto traj : ds.test_idx)
    for (std::uint32_t s = 0; s + 5 <= ds.T; s += 5) windows.push_back({traj, s});
  REQUIRE(rep.n_windows == windows.size());
  std::vector<double> per_step_state(5, 0.0), per_step_reward(5, 0.0);
  double tgt_sum0 = 0;
  std::vector<double> tsum(ds.state_dim, 0), tsq(ds.state_dim, 0);
  for (const auto& wdw : windows) {
    const auto bd = gather_batch<double>(ds, {wdw}, 0, 1, 5);
    const auto fw = baseline_forward(md, bd);
    for (std::size_t k = 0; k < 5; ++k) {
      for (std::size_t d = 0; d < ds.state_dim; ++d) {
        const double diff =
            fw.pred_states[k * ds.state_dim + d] - bd.targets[k * ds.state_dim + d];
        per_step_state[k] += diff * diff;
        tsum[d] += bd.targets[k * ds.state_dim + d];
        tsq[d] += bd.targets[k * ds.state_dim + d] * bd.targets[k * ds.state_dim + d];
      }
      const double rd = fw.pred_rewards[k] - bd.rewards[k];
      per_step_reward[k] += rd * rd;
    }
  }
  (void)tgt_sum0;
  const double n_tgt = double(windows.size()) * 5.0;
  double pooled = 0;
  for (std::size_t d = 0; d < ds.state_dim; ++d) {
    const double mean = tsum[d] / n_tgt;
    pooled += tsq[d] / n_tgt - mean * mean;
  }
  pooled /= double(ds.state_dim);
  const std::size_t bks[] = {1, 3, 5};
  for (std::size_t bi = 0; bi < 3; ++bi) {
    double s = 0, r = 0;
    for (std::size_t k = 0; k < bks[bi]; ++k) {
      s += per_step_state[k];
      r += per_step_reward[k];
    }
    const double denom = double(windows.size()) * double(bks[bi]);
    CHECK(rep.state_mse[bi] ==
          Catch::Approx(s / (denom * ds.state_dim)).epsilon(1e-12));
    CHECK(rep.reward_mse[bi] == Catch::Approx(r / denom).epsilon(1e-12));
    CHECK(rep.state_nmse[bi] ==
          Catch::Approx(s / (denom * ds.state_dim) / pooled).epsilon(1e-12));
  }
}
