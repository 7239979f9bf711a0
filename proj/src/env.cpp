#include "bapolab/env.hpp"

#include <cmath>

#include "bapolab/error.hpp"
#include "bapolab/rng.hpp"

namespace bapolab {

std::string to_string(RewardMode mode) {
  return mode == RewardMode::parity ? "parity" : "exact_match";
}

RewardMode reward_mode_from_string(const std::string& name) {
  if (name == "parity") return RewardMode::parity;
  if (name == "exact_match") return RewardMode::exact_match;
  throw DomainError(msg("unknown reward_mode '", name, "' (expected parity or exact_match)"));
}

EnvSpec EnvSpec::make(int num_prompts, int vocab_size, int horizon, RewardMode mode,
                      std::uint64_t target_seed) {
  if (num_prompts < 1) throw DomainError(msg("num_prompts must be >= 1, got ", num_prompts));
  if (vocab_size < 2) throw DomainError(msg("vocab_size must be >= 2, got ", vocab_size));
  if (horizon < 1) throw DomainError(msg("horizon must be >= 1, got ", horizon));
  EnvSpec spec;
  spec.num_prompts = num_prompts;
  spec.vocab_size = vocab_size;
  spec.horizon = horizon;
  spec.reward_mode = mode;
  spec.target_seed = target_seed;
  RngStream root(target_seed);
  spec.targets.reserve(static_cast<std::size_t>(num_prompts));
  for (int p = 0; p < num_prompts; ++p) {
    RngStream stream = root.derive(static_cast<std::uint64_t>(p));
    std::vector<int> target;
    const int len = mode == RewardMode::parity ? 1 : horizon;
    target.reserve(static_cast<std::size_t>(len));
    for (int t = 0; t < len; ++t)
      target.push_back(static_cast<int>(stream.next_u64() % static_cast<std::uint64_t>(vocab_size)));
    spec.targets.push_back(std::move(target));
  }
  return spec;
}

namespace {

void check_prompt(const EnvSpec& spec, int prompt_id) {
  if (prompt_id < 0 || prompt_id >= spec.num_prompts)
    throw DomainError(msg("prompt_id ", prompt_id, " out of range [0, ", spec.num_prompts, ")"));
}

}  // namespace

double evaluate_reward(const EnvSpec& spec, const Trajectory& traj) {
  check_prompt(spec, traj.prompt_id);
  if (!traj.complete || static_cast<int>(traj.tokens.size()) != spec.horizon)
    throw DomainError(msg("trajectory for prompt ", traj.prompt_id, " is incomplete (",
                          traj.tokens.size(), " of ", spec.horizon, " tokens)"));
  for (int tok : traj.tokens)
    if (tok < 0 || tok >= spec.vocab_size)
      throw DomainError(msg("trajectory token ", tok, " out of range [0, ", spec.vocab_size, ")"));

  const auto& target = spec.targets[static_cast<std::size_t>(traj.prompt_id)];
  if (spec.reward_mode == RewardMode::parity) {
    long long sum = 0;
    for (int tok : traj.tokens) sum += tok;
    return sum % spec.vocab_size == target[0] ? 1.0 : 0.0;
  }
  return traj.tokens == target ? 1.0 : 0.0;
}

double success_probability(const EnvSpec& spec, const PolicyTable& policy, int prompt_id) {
  check_prompt(spec, prompt_id);
  if (policy.vocab_size() != spec.vocab_size)
    throw DomainError("policy vocab_size does not match env spec");
  double count = 1.0;
  for (int t = 0; t < spec.horizon; ++t) count *= spec.vocab_size;
  if (count > 1e6)
    throw DomainError(msg("enumeration bound exceeded: V^T = ", count, " > 1e6"));

  // DFS over the prefix tree, carrying the running sequence probability.
  Trajectory traj;
  traj.prompt_id = prompt_id;
  traj.complete = true;
  traj.tokens.assign(static_cast<std::size_t>(spec.horizon), 0);
  double total = 0.0;
  auto dfs = [&](auto&& self, int depth, double prob, StateId& state) -> void {
    if (depth == spec.horizon) {
      total += prob * evaluate_reward(spec, traj);
      return;
    }
    const auto p = policy.probs_or_uniform(state);
    for (int y = 0; y < spec.vocab_size; ++y) {
      traj.tokens[static_cast<std::size_t>(depth)] = y;
      state.prefix.push_back(y);
      self(self, depth + 1, prob * p[static_cast<std::size_t>(y)], state);
      state.prefix.pop_back();
    }
  };
  StateId root{prompt_id, {}};
  dfs(dfs, 0, 1.0, root);
  return total;
}

}  // namespace bapolab
