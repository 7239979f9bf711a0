#include "bapolab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "bapolab/error.hpp"

namespace bapolab {

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::grpo_fixed: return "grpo_fixed";
    case Algorithm::clip_higher: return "clip_higher";
    case Algorithm::asymmetric: return "asymmetric";
    case Algorithm::bapo: return "bapo";
  }
  return "?";
}

Algorithm algorithm_from_string(const std::string& name) {
  if (name == "grpo_fixed") return Algorithm::grpo_fixed;
  if (name == "clip_higher") return Algorithm::clip_higher;
  if (name == "asymmetric") return Algorithm::asymmetric;
  if (name == "bapo") return Algorithm::bapo;
  throw DomainError(msg("unknown algorithm '", name,
                        "' (expected grpo_fixed, clip_higher, asymmetric, or bapo)"));
}

void TrainerConfig::validate() const {
  if (steps < 1) throw DomainError(msg("trainer.steps must be >= 1, got ", steps));
  if (!(learning_rate > 0.0))
    throw DomainError(msg("trainer.learning_rate must be > 0, got ", learning_rate));
  if (staleness_epochs < 0)
    throw DomainError(msg("rollout.staleness_epochs must be >= 0, got ", staleness_epochs));
  if (group_size < 2) throw DomainError(msg("rollout.group_size must be >= 2, got ", group_size));
  if (prompts_per_batch < 1)
    throw DomainError(msg("trainer.prompts_per_batch must be >= 1, got ", prompts_per_batch));
  if (partial_rollout_budget < 0)
    throw DomainError(msg("rollout.partial_rollout_budget must be >= 0, got ", partial_rollout_budget));
  if (env.num_prompts < 1) throw DomainError("env.num_prompts must be >= 1");
  if (env.vocab_size < 2) throw DomainError("env.vocab_size must be >= 2");
  if (env.horizon < 1) throw DomainError("env.horizon must be >= 1");
  try {
    bapo.validate();
  } catch (const DomainError& e) {
    throw DomainError(msg("bapo.", e.what()));
  }
  if (!fixed_bounds.valid())
    throw DomainError(msg("trainer.fixed_bounds (", fixed_bounds.c_low, ", ", fixed_bounds.c_high,
                          ") must satisfy 0 <= c_low < 1 < c_high"));
}

namespace {

struct UpdateOutput {
  ClipBounds bounds;
  LossBreakdown breakdown;
  double grad_norm = 0.0;
  std::optional<SearchOutcome> outcome;
};

UpdateOutput apply_update(PolicyTable& policy, const RolloutBatch& view, const TrainerConfig& cfg) {
  UpdateOutput out;
  if (cfg.algorithm == Algorithm::bapo) {
    const auto result = bapo_update(policy, view, cfg.bapo, cfg.learning_rate, cfg.objective);
    out.bounds = result.bounds;
    out.breakdown = result.breakdown;
    out.grad_norm = result.grad_norm;
    out.outcome = result.trace.outcome;
  } else {
    out.bounds = cfg.fixed_bounds;
    auto [grad, breakdown] = batch_gradient(policy, view, cfg.fixed_bounds, cfg.objective);
    out.breakdown = breakdown;
    out.grad_norm = grad.l2_norm();
    policy.apply_gradient(grad, cfg.learning_rate);
  }
  return out;
}

double batch_entropy(const PolicyTable& policy, const RolloutBatch& batch) {
  if (batch.records.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& rec : batch.records) sum += policy.state_entropy(rec.state);
  return sum / static_cast<double>(batch.records.size());
}

double mean_ratio_deviation(const PolicyTable& policy, const RolloutBatch& batch) {
  if (batch.records.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& rec : batch.records)
    sum += std::abs(std::exp(policy.log_prob(rec.state, rec.token) - rec.behavior_log_prob) - 1.0);
  return sum / static_cast<double>(batch.records.size());
}

void run_epochs(PolicyTable& policy, const RolloutBatch& batch, const TrainerConfig& cfg, int step,
                RunResult& result) {
  for (const auto& rec : batch.records) policy.ensure_state(rec.state);
  for (int epoch = 0; epoch <= cfg.staleness_epochs; ++epoch) {
    try {
      const RolloutBatch view = replay_view(batch, epoch);
      MetricsRow row;
      row.step = step;
      row.epoch = epoch;
      row.mean_reward = view.mean_reward;
      row.policy_entropy = batch_entropy(policy, view);
      row.mean_is_ratio_deviation = mean_ratio_deviation(policy, view);
      const UpdateOutput update = apply_update(policy, view, cfg);
      row.grad_norm = update.grad_norm;
      row.pos_ratio = update.breakdown.pos_ratio;
      row.c_low = update.bounds.c_low;
      row.c_high = update.bounds.c_high;
      row.clip_fraction_pos = update.breakdown.clip_fraction_pos;
      row.clip_fraction_neg = update.breakdown.clip_fraction_neg;
      result.rows.push_back(row);
      if (update.outcome) result.bapo_outcomes.push_back(*update.outcome);
    } catch (const std::exception& e) {
      throw NumericError(msg("step ", step, " epoch ", epoch, ": ", e.what()));
    }
  }
}

RunResult run_whole_trajectory(const TrainerConfig& cfg) {
  RunResult result{{}, {}, PolicyTable(cfg.env.vocab_size)};
  PolicyTable& policy = result.final_policy;
  RngStream root(cfg.seed);
  for (int step = 0; step < cfg.steps; ++step) {
    const RngStream step_stream = root.derive(static_cast<std::uint64_t>(step));
    PolicyTable snapshot = policy;
    std::vector<GroupSample> groups;
    groups.reserve(static_cast<std::size_t>(cfg.prompts_per_batch));
    for (int slot = 0; slot < cfg.prompts_per_batch; ++slot) {
      const int prompt =
          (step * cfg.prompts_per_batch + slot) % cfg.env.num_prompts;
      groups.push_back(generate_group(snapshot, cfg.env, prompt, cfg.group_size,
                                      step_stream.derive(static_cast<std::uint64_t>(slot))));
    }
    const RolloutBatch batch =
        assemble_batch(groups, cfg.staleness_epochs, cfg.grpo_std_normalize);
    run_epochs(policy, batch, cfg, step, result);
  }
  return result;
}

RunResult run_partial_rollout(const TrainerConfig& cfg) {
  RunResult result{{}, {}, PolicyTable(cfg.env.vocab_size)};
  PolicyTable& policy = result.final_policy;
  RngStream root(cfg.seed);

  PartialRolloutBuffer buffer;
  buffer.token_budget = cfg.partial_rollout_budget;
  const int period = (cfg.env.horizon + cfg.partial_rollout_budget - 1) / cfg.partial_rollout_budget;

  // Slot phases are staggered modulo the completion period so that, past
  // warmup, some group finishes every step and pending trajectories span the
  // updates triggered by their neighbors.
  std::vector<int> generation(static_cast<std::size_t>(cfg.prompts_per_batch), 0);
  std::vector<bool> in_flight(static_cast<std::size_t>(cfg.prompts_per_batch), false);

  for (int step = 0; step < cfg.steps; ++step) {
    for (int slot = 0; slot < cfg.prompts_per_batch; ++slot) {
      const bool due_first = generation[static_cast<std::size_t>(slot)] == 0 &&
                             step >= slot % period;
      const bool due_next = generation[static_cast<std::size_t>(slot)] > 0;
      if (!in_flight[static_cast<std::size_t>(slot)] && (due_first || due_next)) {
        const int n = generation[static_cast<std::size_t>(slot)];
        // Rotate prompts across generations so the same prompt's states are
        // periodically in flight while other slots update them.
        const int prompt = (slot + n) % cfg.env.num_prompts;
        enqueue_group(buffer, prompt, slot, cfg.group_size,
                      root.derive(static_cast<std::uint64_t>(step))
                          .derive(static_cast<std::uint64_t>(slot)));
        in_flight[static_cast<std::size_t>(slot)] = true;
        ++generation[static_cast<std::size_t>(slot)];
      }
    }

    auto completed = step_partial_rollout(buffer, policy, cfg.env);
    if (completed.empty()) continue;

    std::sort(completed.begin(), completed.end(), [](const auto& a, const auto& b) {
      return std::pair(a.group_slot, a.member_index) < std::pair(b.group_slot, b.member_index);
    });
    std::map<int, GroupSample> by_slot;
    for (auto& pending : completed) {
      in_flight[static_cast<std::size_t>(pending.group_slot)] = false;
      auto& group = by_slot[pending.group_slot];
      group.prompt_id = pending.prompt_id;
      group.members.push_back(SampledTrajectory{std::move(pending.traj),
                                                std::move(pending.token_log_probs),
                                                std::move(pending.token_versions)});
    }
    std::vector<GroupSample> groups;
    groups.reserve(by_slot.size());
    for (auto& [slot, group] : by_slot) groups.push_back(std::move(group));

    const RolloutBatch batch =
        assemble_batch(groups, cfg.staleness_epochs, cfg.grpo_std_normalize);
    run_epochs(policy, batch, cfg, step, result);
  }
  return result;
}

}  // namespace

RunResult run(const TrainerConfig& config) {
  config.validate();
  return config.partial_rollout_budget > 0 ? run_partial_rollout(config)
                                           : run_whole_trajectory(config);
}

double median(std::vector<double> values) {
  if (values.empty()) throw DomainError("median of empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

ComparisonSummary run_comparison(const std::vector<std::pair<std::string, TrainerConfig>>& configs,
                                 const std::vector<std::uint64_t>& seeds) {
  if (configs.empty()) throw DomainError("run_comparison: no configs");
  if (seeds.empty()) throw DomainError("run_comparison: no seeds");
  for (const auto& [label, cfg] : configs)
    if (!(cfg.env == configs.front().second.env))
      throw DomainError(msg("run_comparison: config '", label, "' uses a different env"));

  ComparisonSummary summary;
  for (const auto& [label, base] : configs) {
    std::vector<double> ent, rew, auc;
    for (std::uint64_t seed : seeds) {
      TrainerConfig cfg = base;
      cfg.seed = seed;
      const RunResult result = run(cfg);
      if (result.rows.empty()) throw NumericError(msg("run '", label, "' produced no metrics rows"));
      ComparisonCell cell;
      cell.label = label;
      cell.seed = seed;
      cell.terminal_entropy = result.rows.back().policy_entropy;
      cell.terminal_reward = result.rows.back().mean_reward;
      double sum = 0.0;
      for (const auto& row : result.rows) sum += row.policy_entropy;
      cell.mean_entropy = sum / static_cast<double>(result.rows.size());
      ent.push_back(cell.terminal_entropy);
      rew.push_back(cell.terminal_reward);
      auc.push_back(cell.mean_entropy);
      summary.cells.push_back(std::move(cell));
    }
    summary.medians.push_back(
        ComparisonMedians{label, median(ent), median(rew), median(auc)});
  }
  return summary;
}

}  // namespace bapolab
