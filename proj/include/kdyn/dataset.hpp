#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kdyn/errors.hpp"

namespace kdyn {

// Trajectory set in feature space: states are what the model consumes
// (pendulum exposes (cos th, sin th, th_dot), the others their raw state).
// Rewards are aligned so rewards[traj][t] belongs to (states[t], actions[t]).
struct Dataset {
  std::string descriptor;
  std::uint32_t state_dim = 0, action_dim = 0, n_traj = 0, T = 0;
  double dt = 0;
  std::vector<std::uint32_t> train_idx, test_idx;
  std::vector<double> states;   // n_traj x (T+1) x state_dim
  std::vector<double> actions;  // n_traj x T x action_dim
  std::vector<double> rewards;  // n_traj x T

  const double* state(std::size_t traj, std::size_t t) const {
    return states.data() + (traj * (T + 1) + t) * state_dim;
  }
  const double* action(std::size_t traj, std::size_t t) const {
    return actions.data() + (traj * T + t) * action_dim;
  }
  double reward(std::size_t traj, std::size_t t) const {
    return rewards[traj * T + t];
  }

  void validate() const {
    if (n_traj == 0 || T == 0 || state_dim == 0 || action_dim == 0)
      throw DataError("dataset has empty dimensions");
    if (states.size() != std::size_t(n_traj) * (T + 1) * state_dim ||
        actions.size() != std::size_t(n_traj) * T * action_dim ||
        rewards.size() != std::size_t(n_traj) * T)
      throw DataError("dataset buffers disagree with the declared shape");
    if (train_idx.size() + test_idx.size() != n_traj)
      throw DataError("train/test split does not cover the dataset");
    for (auto i : train_idx)
      if (i >= n_traj) throw DataError("train index out of range");
    for (auto i : test_idx)
      if (i >= n_traj) throw DataError("test index out of range");
    if (!(dt > 0)) throw DataError("dataset dt must be positive");
  }
};

}  // namespace kdyn
