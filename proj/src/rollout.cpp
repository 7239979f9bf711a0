#include "bapolab/rollout.hpp"

#include <algorithm>
#include <cmath>

#include "bapolab/error.hpp"

namespace bapolab {

namespace {

constexpr double kAdvantageEps = 1e-6;

void extend_one_token(PolicyTable& policy, int prompt_id, Trajectory& traj,
                      std::vector<double>& log_probs, std::vector<std::uint64_t>& versions,
                      RngStream& stream) {
  StateId state{prompt_id, traj.tokens};
  policy.ensure_state(state);
  const int token = policy.sample_token(state, stream);
  log_probs.push_back(policy.log_prob(state, token));
  versions.push_back(policy.version());
  traj.tokens.push_back(token);
}

}  // namespace

GroupSample generate_group(PolicyTable& snapshot, const EnvSpec& spec, int prompt_id, int group_size,
                           const RngStream& rng) {
  if (group_size < 2)
    throw DomainError(msg("group_size must be >= 2 for group standardization, got ", group_size));
  GroupSample group;
  group.prompt_id = prompt_id;
  group.members.reserve(static_cast<std::size_t>(group_size));
  for (int i = 0; i < group_size; ++i) {
    RngStream stream = rng.derive(static_cast<std::uint64_t>(i));
    SampledTrajectory sample;
    sample.traj.prompt_id = prompt_id;
    for (int t = 0; t < spec.horizon; ++t)
      extend_one_token(snapshot, prompt_id, sample.traj, sample.token_log_probs,
                       sample.token_versions, stream);
    sample.traj.complete = true;
    sample.traj.reward = evaluate_reward(spec, sample.traj);
    group.members.push_back(std::move(sample));
  }
  return group;
}

std::vector<double> grpo_advantages(const std::vector<double>& rewards, bool std_normalize) {
  const std::size_t n = rewards.size();
  if (n < 2) throw DomainError(msg("grpo_advantages needs >= 2 rewards, got ", n));
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(n);
  const double denom = std_normalize ? std::sqrt(var) + kAdvantageEps : 1.0;
  std::vector<double> adv(n);
  for (std::size_t i = 0; i < n; ++i) adv[i] = (rewards[i] - mean) / denom;
  return adv;
}

RolloutBatch assemble_batch(const std::vector<GroupSample>& groups, int staleness_epochs,
                            bool std_normalize) {
  if (staleness_epochs < 0) throw DomainError("staleness_epochs must be >= 0");
  RolloutBatch batch;
  batch.replay_epoch = 0;
  batch.staleness_epochs = staleness_epochs;
  double reward_sum = 0.0;
  int group_id = 0;
  for (const auto& group : groups) {
    if (group.members.size() < 2)
      throw DomainError(msg("group for prompt ", group.prompt_id, " has fewer than 2 members"));
    if (batch.group_size == 0) batch.group_size = static_cast<int>(group.members.size());
    std::vector<double> rewards;
    rewards.reserve(group.members.size());
    for (const auto& m : group.members) {
      if (!m.traj.complete)
        throw DomainError(msg("incomplete trajectory in group for prompt ", group.prompt_id));
      rewards.push_back(m.traj.reward);
      reward_sum += m.traj.reward;
    }
    const auto advantages = grpo_advantages(rewards, std_normalize);
    for (std::size_t i = 0; i < group.members.size(); ++i) {
      const auto& m = group.members[i];
      for (std::size_t t = 0; t < m.traj.tokens.size(); ++t) {
        TokenRecord rec;
        rec.state.prompt_id = group.prompt_id;
        rec.state.prefix.assign(m.traj.tokens.begin(),
                                m.traj.tokens.begin() + static_cast<std::ptrdiff_t>(t));
        rec.token = m.traj.tokens[t];
        rec.behavior_log_prob = m.token_log_probs[t];
        rec.behavior_version = m.token_versions[t];
        rec.advantage = advantages[i];
        rec.group_id = group_id;
        batch.records.push_back(std::move(rec));
      }
      ++batch.num_trajectories;
    }
    ++group_id;
  }
  batch.mean_reward = batch.num_trajectories > 0
                          ? reward_sum / static_cast<double>(batch.num_trajectories)
                          : 0.0;
  return batch;
}

RolloutBatch replay_view(const RolloutBatch& batch, int epoch) {
  if (epoch < 0 || epoch > batch.staleness_epochs)
    throw DomainError(msg("replay epoch ", epoch, " out of range [0, ", batch.staleness_epochs, "]"));
  RolloutBatch view = batch;
  view.replay_epoch = epoch;
  return view;
}

void enqueue_group(PartialRolloutBuffer& buffer, int prompt_id, int group_slot, int group_size,
                   const RngStream& rng) {
  if (group_size < 2) throw DomainError(msg("group_size must be >= 2, got ", group_size));
  for (int i = 0; i < group_size; ++i) {
    PendingTrajectory pending;
    pending.prompt_id = prompt_id;
    pending.group_slot = group_slot;
    pending.member_index = i;
    pending.traj.prompt_id = prompt_id;
    pending.stream = rng.derive(static_cast<std::uint64_t>(i));
    buffer.pending.push_back(std::move(pending));
  }
}

std::vector<PendingTrajectory> step_partial_rollout(PartialRolloutBuffer& buffer, PolicyTable& policy,
                                                    const EnvSpec& spec) {
  if (buffer.token_budget < 1)
    throw DomainError(msg("token_budget must be >= 1, got ", buffer.token_budget));
  std::vector<PendingTrajectory> completed;
  std::vector<PendingTrajectory> still_pending;
  still_pending.reserve(buffer.pending.size());
  for (auto& pending : buffer.pending) {
    const int remaining = spec.horizon - static_cast<int>(pending.traj.tokens.size());
    const int take = std::min(buffer.token_budget, remaining);
    for (int t = 0; t < take; ++t)
      extend_one_token(policy, pending.prompt_id, pending.traj, pending.token_log_probs,
                       pending.token_versions, pending.stream);
    if (static_cast<int>(pending.traj.tokens.size()) == spec.horizon) {
      pending.traj.complete = true;
      pending.traj.reward = evaluate_reward(spec, pending.traj);
      completed.push_back(std::move(pending));
    } else {
      still_pending.push_back(std::move(pending));
    }
  }
  buffer.pending = std::move(still_pending);
  return completed;
}

}  // namespace bapolab
