#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bapolab/bapo.hpp"
#include "bapolab/env.hpp"
#include "bapolab/metrics.hpp"
#include "bapolab/objective.hpp"
#include "bapolab/policy.hpp"
#include "bapolab/rollout.hpp"

namespace bapolab {

enum class Algorithm { grpo_fixed, clip_higher, asymmetric, bapo };

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& name);

struct TrainerConfig {
  Algorithm algorithm = Algorithm::grpo_fixed;
  int steps = 1;
  double learning_rate = 0.05;
  int staleness_epochs = 0;  // E: each sampled batch is reused for E+1 updates
  EnvSpec env;
  int group_size = 8;
  int prompts_per_batch = 1;
  std::uint64_t seed = 0;
  BapoConfig bapo;                      // used when algorithm == bapo
  ClipBounds fixed_bounds{0.8, 1.2};    // used otherwise
  int partial_rollout_budget = 0;       // > 0 switches to segmented generation
  bool grpo_std_normalize = true;
  ObjectiveOptions objective;

  // Throws DomainError naming the offending field.
  void validate() const;
};

struct RunResult {
  std::vector<MetricsRow> rows;
  // One entry per update when algorithm == bapo, in row order.
  std::vector<SearchOutcome> bapo_outcomes;
  PolicyTable final_policy;
};

// Runs the full training loop: per step, snapshot the policy, sample one
// group per prompt slot, compute group advantages, then update E+1 times on
// the frozen batch (BAPO re-searches its bounds each epoch from the range
// starts). Fully determined by the config, including all sampling.
//
// With partial_rollout_budget > 0, whole-group sampling is replaced by
// segmented generation under the live policy: each step extends every
// pending trajectory by the budget, and the groups that complete form that
// step's batch. Slot phases are staggered so trajectories span updates and
// genuinely mix behavior versions; steps in which no group completes emit no
// rows.
RunResult run(const TrainerConfig& config);

struct ComparisonCell {
  std::string label;
  std::uint64_t seed = 0;
  double terminal_entropy = 0.0;
  double terminal_reward = 0.0;
  double mean_entropy = 0.0;  // step-averaged entropy (area under the curve)
};

struct ComparisonMedians {
  std::string label;
  double terminal_entropy = 0.0;
  double terminal_reward = 0.0;
  double mean_entropy = 0.0;
};

struct ComparisonSummary {
  std::vector<ComparisonCell> cells;
  std::vector<ComparisonMedians> medians;  // one per config, input order
};

// Cross-product of configs and seeds. All configs must share the same env.
ComparisonSummary run_comparison(const std::vector<std::pair<std::string, TrainerConfig>>& configs,
                                 const std::vector<std::uint64_t>& seeds);

double median(std::vector<double> values);

}  // namespace bapolab
