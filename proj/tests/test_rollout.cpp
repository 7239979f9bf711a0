#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "bapolab/env.hpp"
#include "bapolab/error.hpp"
#include "bapolab/rollout.hpp"
#include "bapolab/theory.hpp"

using namespace bapolab;

namespace {

EnvSpec small_parity(int vocab = 4, int horizon = 3) {
  return EnvSpec::make(2, vocab, horizon, RewardMode::parity, 3);
}

}  // namespace

TEST_CASE("grpo_advantages: standardization arithmetic") {
  const auto a = grpo_advantages({1, 0, 0, 1});
  CHECK(a[0] == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(a[1] == doctest::Approx(-1.0).epsilon(1e-5));
  CHECK(a[2] == doctest::Approx(-1.0).epsilon(1e-5));
  CHECK(a[3] == doctest::Approx(1.0).epsilon(1e-5));

  const auto zero = grpo_advantages({1, 1, 1, 1});
  for (double v : zero) CHECK(v == 0.0);

  // Frozen from an independent mean/std computation.
  const auto skew = grpo_advantages({1, 0, 0, 0, 0, 0, 0, 0});
  CHECK(skew[0] == doctest::Approx(2.6457433110887805).epsilon(1e-12));
  for (int i = 1; i < 8; ++i)
    CHECK(skew[static_cast<std::size_t>(i)] == doctest::Approx(-0.37796333015554007).epsilon(1e-12));

  CHECK_THROWS_AS(grpo_advantages({1.0}), DomainError);

  // Mean-only variant.
  const auto centered = grpo_advantages({1, 0, 0, 1}, false);
  CHECK(centered[0] == doctest::Approx(0.5));
  CHECK(centered[1] == doctest::Approx(-0.5));
}

TEST_CASE("group advantages sum to zero") {
  RngStream rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    RngStream stream = rng.derive(static_cast<std::uint64_t>(trial));
    const int g = 2 + static_cast<int>(stream.next_u64() % 15);
    std::vector<double> rewards(static_cast<std::size_t>(g));
    for (double& r : rewards) r = stream.next_double() < 0.3 ? 1.0 : 0.0;
    const auto adv = grpo_advantages(rewards);
    double sum = 0.0;
    for (double v : adv) sum += v;
    CHECK(std::abs(sum) < 1e-9);
  }
}

TEST_CASE("generate_group: determinism and degenerate policies") {
  const EnvSpec spec = small_parity();
  PolicyTable snapshot(4);
  const RngStream rng(55);

  const GroupSample a = generate_group(snapshot, spec, 0, 4, rng);
  PolicyTable snapshot2(4);
  const GroupSample b = generate_group(snapshot2, spec, 0, 4, rng);
  REQUIRE(a.members.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(a.members[i].traj.tokens == b.members[i].traj.tokens);
    CHECK(a.members[i].token_log_probs == b.members[i].token_log_probs);
  }

  // A deterministic policy yields identical trajectories.
  PolicyTable det(4);
  StateId cursor{0, {}};
  for (int t = 0; t < spec.horizon; ++t) {
    det.set_logits(cursor, {500, 0, 0, 0});
    cursor.prefix.push_back(0);
  }
  const GroupSample same = generate_group(det, spec, 0, 3, RngStream(9));
  for (const auto& m : same.members) CHECK(m.traj.tokens == std::vector<int>{0, 0, 0});

  CHECK_THROWS_AS(generate_group(det, spec, 0, 1, RngStream(1)), DomainError);
}

TEST_CASE("group mean reward is near 1/V under the uniform policy") {
  const EnvSpec spec = small_parity(4, 3);
  PolicyTable snapshot(4);
  const int g = 64;
  double total = 0.0;
  const int groups = 50;
  for (int k = 0; k < groups; ++k) {
    const GroupSample group = generate_group(snapshot, spec, 0, g, RngStream(400 + static_cast<std::uint64_t>(k)));
    for (const auto& m : group.members) total += m.traj.reward;
  }
  const double n = static_cast<double>(g) * groups;
  const double p = 0.25;
  CHECK(std::abs(total / n - p) < 4.0 * std::sqrt(p * (1 - p) / n));
}

TEST_CASE("assemble_batch broadcasts one advantage per trajectory") {
  const EnvSpec spec = small_parity();
  PolicyTable snapshot(4);
  std::vector<GroupSample> groups;
  groups.push_back(generate_group(snapshot, spec, 0, 6, RngStream(71)));
  groups.push_back(generate_group(snapshot, spec, 1, 6, RngStream(72)));
  const RolloutBatch batch = assemble_batch(groups, 2);

  CHECK(batch.group_size == 6);
  CHECK(batch.num_trajectories == 12);
  CHECK(batch.records.size() == 12u * 3u);
  CHECK(batch.staleness_epochs == 2);

  // All tokens of one trajectory share the advantage; prefixes are the
  // running token sequence.
  for (std::size_t i = 0; i < batch.records.size(); i += 3) {
    const auto& first = batch.records[i];
    CHECK(first.state.prefix.empty());
    for (std::size_t t = 1; t < 3; ++t) {
      const auto& rec = batch.records[i + t];
      CHECK(rec.advantage == first.advantage);
      CHECK(rec.state.prefix.size() == t);
    }
  }

  // Behavior quantities are finite and non-positive.
  for (const auto& rec : batch.records) {
    CHECK(std::isfinite(rec.behavior_log_prob));
    CHECK(rec.behavior_log_prob <= 0.0);
    CHECK(rec.behavior_version <= snapshot.version());
  }
}

TEST_CASE("replay_view keeps behavior quantities and checks the range") {
  const EnvSpec spec = small_parity();
  PolicyTable snapshot(4);
  const RolloutBatch batch =
      assemble_batch({generate_group(snapshot, spec, 0, 4, RngStream(81))}, 2);

  const RolloutBatch epoch2 = replay_view(batch, 2);
  CHECK(epoch2.replay_epoch == 2);
  REQUIRE(epoch2.records.size() == batch.records.size());
  for (std::size_t i = 0; i < batch.records.size(); ++i) {
    CHECK(epoch2.records[i].behavior_log_prob == batch.records[i].behavior_log_prob);
    CHECK(epoch2.records[i].behavior_version == batch.records[i].behavior_version);
  }
  CHECK_THROWS_AS(replay_view(batch, 3), DomainError);
  CHECK_THROWS_AS(replay_view(batch, -1), DomainError);
}

TEST_CASE("on-policy ratios are exactly one before any update") {
  const EnvSpec spec = small_parity();
  PolicyTable policy(4);
  PolicyTable snapshot = policy;
  const RolloutBatch batch =
      assemble_batch({generate_group(snapshot, spec, 0, 4, RngStream(91))}, 0);
  for (const auto& rec : batch.records) {
    snapshot.ensure_state(rec.state);
    const double r = std::exp(snapshot.log_prob(rec.state, rec.token) - rec.behavior_log_prob);
    CHECK(r == 1.0);
  }
}

TEST_CASE("partial rollout: budget >= horizon completes in one call") {
  const EnvSpec spec = small_parity(4, 3);
  PolicyTable policy(4);
  PartialRolloutBuffer buffer;
  buffer.token_budget = 5;
  enqueue_group(buffer, 0, 0, 4, RngStream(111));
  const auto done = step_partial_rollout(buffer, policy, spec);
  CHECK(done.size() == 4);
  CHECK(buffer.pending.empty());
  for (const auto& p : done) {
    CHECK(p.traj.complete);
    CHECK(p.traj.tokens.size() == 3);
    // One behavior version for the whole trajectory.
    for (auto v : p.token_versions) CHECK(v == p.token_versions[0]);
  }
}

TEST_CASE("partial rollout: budget 2, horizon 4 completes after exactly 2 calls") {
  const EnvSpec spec = EnvSpec::make(1, 4, 4, RewardMode::parity, 0);
  PolicyTable policy(4);
  PartialRolloutBuffer buffer;
  buffer.token_budget = 2;
  enqueue_group(buffer, 0, 0, 2, RngStream(121));

  CHECK(step_partial_rollout(buffer, policy, spec).empty());
  CHECK(buffer.pending.size() == 2);
  const auto v_first = policy.version();

  // Move the policy between segments.
  GradientTable grad;
  const StateId root{0, {}};
  policy.ensure_state(root);
  grad.entries.emplace(root, std::vector<double>{0.5, -0.5, 0.25, 0});
  policy.apply_gradient(grad, 0.1);

  const auto done = step_partial_rollout(buffer, policy, spec);
  CHECK(done.size() == 2);
  for (const auto& p : done) {
    REQUIRE(p.token_versions.size() == 4);
    CHECK(p.token_versions[0] == v_first);
    CHECK(p.token_versions[1] == v_first);
    CHECK(p.token_versions[2] == policy.version());
    CHECK(p.token_versions[3] == policy.version());
    CHECK(p.token_versions[2] >= p.token_versions[1]);
  }
}

TEST_CASE("segmented rollout replays the single-shot trajectory under a frozen policy") {
  const EnvSpec spec = EnvSpec::make(1, 5, 4, RewardMode::parity, 7);
  PolicyTable policy(5);
  policy.set_logits(StateId{0, {}}, {0.4, -0.3, 0.2, 0.0, -0.6});

  PolicyTable single_shot = policy;
  const RngStream parent(2024);
  const GroupSample group = generate_group(single_shot, spec, 0, 3, parent);

  PolicyTable segmented = policy;
  PartialRolloutBuffer buffer;
  buffer.token_budget = 1;
  enqueue_group(buffer, 0, 0, 3, parent);
  std::vector<PendingTrajectory> done;
  while (done.size() < 3) {
    auto completed = step_partial_rollout(buffer, segmented, spec);
    for (auto& c : completed) done.push_back(std::move(c));
  }
  std::sort(done.begin(), done.end(),
            [](const auto& a, const auto& b) { return a.member_index < b.member_index; });
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(done[i].traj.tokens == group.members[i].traj.tokens);
    CHECK(done[i].token_log_probs == group.members[i].token_log_probs);
    CHECK(done[i].traj.reward == group.members[i].traj.reward);
  }
}

TEST_CASE("exact advantages have zero expectation on rollout-visited states") {
  const EnvSpec spec = small_parity(3, 3);
  PolicyTable policy(3);
  policy.set_logits(StateId{0, {}}, {0.3, -0.4, 0.1});
  PolicyTable snapshot = policy;
  const GroupSample group = generate_group(snapshot, spec, 0, 4, RngStream(131));
  const RolloutBatch batch = assemble_batch({group}, 0);
  for (const auto& rec : batch.records) {
    const auto table = theory::exact_advantages(snapshot, spec, rec.state);
    const auto probs = snapshot.probs(rec.state);
    double expectation = 0.0;
    for (int y = 0; y < 3; ++y)
      expectation += probs[static_cast<std::size_t>(y)] * table.advantage[static_cast<std::size_t>(y)];
    CHECK(std::abs(expectation) < 1e-12);
  }
}
