#pragma once

#include <cstdint>
#include <vector>

#include "bapolab/env.hpp"
#include "bapolab/policy.hpp"
#include "bapolab/rng.hpp"

namespace bapolab {

// One generated token with everything the off-policy objective needs,
// captured at generation time under the behavior policy.
struct TokenRecord {
  StateId state;
  int token = 0;
  double behavior_log_prob = 0.0;
  std::uint64_t behavior_version = 0;
  double advantage = 0.0;
  int group_id = 0;
};

struct RolloutBatch {
  std::vector<TokenRecord> records;
  int group_size = 0;
  int replay_epoch = 0;
  int staleness_epochs = 0;  // E: maximum reuse epochs for this batch
  int num_trajectories = 0;
  double mean_reward = 0.0;  // over all trajectories, zero-variance groups included
};

// A trajectory as sampled, with per-token behavior log-probs and the policy
// version that generated each token.
struct SampledTrajectory {
  Trajectory traj;
  std::vector<double> token_log_probs;
  std::vector<std::uint64_t> token_versions;
};

struct GroupSample {
  int prompt_id = 0;
  std::vector<SampledTrajectory> members;
};

// Samples G complete trajectories for one prompt from a frozen snapshot.
// Member i consumes rng.derive(i); token t is that stream's t-th draw, so a
// segmented rollout with the same parent stream reproduces these tokens.
// States are materialized in the snapshot as they are visited.
GroupSample generate_group(PolicyTable& snapshot, const EnvSpec& spec, int prompt_id, int group_size,
                           const RngStream& rng);

// Group-standardized advantages: A_i = (R_i - mean) / (std + 1e-6) with the
// population std; all-equal rewards give all-zero advantages. When
// std_normalize is false only the mean is subtracted.
std::vector<double> grpo_advantages(const std::vector<double>& rewards, bool std_normalize = true);

// Assembles groups into a flat token batch, broadcasting each trajectory's
// sequence-level advantage to its tokens.
RolloutBatch assemble_batch(const std::vector<GroupSample>& groups, int staleness_epochs,
                            bool std_normalize = true);

// Same records at a later reuse epoch. Behavior quantities are untouched;
// staleness arises because the current policy has moved since sampling.
RolloutBatch replay_view(const RolloutBatch& batch, int epoch);

// Trajectory suspended mid-generation. The stream resumes exactly where it
// stopped, so segmentation does not change which tokens get drawn.
struct PendingTrajectory {
  int prompt_id = 0;
  int group_slot = 0;
  int member_index = 0;
  Trajectory traj;
  std::vector<double> token_log_probs;
  std::vector<std::uint64_t> token_versions;
  RngStream stream;
};

struct PartialRolloutBuffer {
  std::vector<PendingTrajectory> pending;
  int token_budget = 1;  // per trajectory per step_partial_rollout call
};

// Queues a fresh group of G empty trajectories. Member streams are derived
// exactly as in generate_group, so the two paths are replay-equivalent.
void enqueue_group(PartialRolloutBuffer& buffer, int prompt_id, int group_slot, int group_size,
                   const RngStream& rng);

// Extends every pending trajectory by up to token_budget tokens under the
// current policy (new tokens tagged with its version); trajectories that
// reach the horizon are rewarded, removed, and returned.
std::vector<PendingTrajectory> step_partial_rollout(PartialRolloutBuffer& buffer, PolicyTable& policy,
                                                    const EnvSpec& spec);

}  // namespace bapolab
