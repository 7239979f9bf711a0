#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bapolab/policy.hpp"

namespace bapolab {

enum class RewardMode { parity, exact_match };

std::string to_string(RewardMode mode);
RewardMode reward_mode_from_string(const std::string& name);

// Finite-horizon token-generation task with a binary terminal reward.
//
//   parity:      reward 1 iff sum(tokens) == target (mod vocab_size).
//                Uniform-policy success rate is 1/V.
//   exact_match: reward 1 iff tokens equal the target sequence.
//                Uniform-policy success rate is V^-T, so early training is
//                dominated by negative-advantage groups.
struct EnvSpec {
  int num_prompts = 1;
  int vocab_size = 2;
  int horizon = 1;
  RewardMode reward_mode = RewardMode::parity;
  std::uint64_t target_seed = 0;
  // parity: one residue per prompt; exact_match: a length-T sequence per prompt.
  std::vector<std::vector<int>> targets;

  static EnvSpec make(int num_prompts, int vocab_size, int horizon, RewardMode mode,
                      std::uint64_t target_seed);

  bool operator==(const EnvSpec&) const = default;
};

struct Trajectory {
  int prompt_id = 0;
  std::vector<int> tokens;
  double reward = 0.0;
  bool complete = false;
};

// Binary terminal reward. Requires a complete trajectory of exactly
// `horizon` tokens, all in range.
double evaluate_reward(const EnvSpec& spec, const Trajectory& traj);

// Exact success probability of `policy` on one prompt by enumerating all
// V^T sequences (lazy states read as uniform). Enumeration is refused above
// 10^6 sequences.
double success_probability(const EnvSpec& spec, const PolicyTable& policy, int prompt_id);

}  // namespace bapolab
