#include "bapolab/theory.hpp"

#include <algorithm>
#include <cmath>

#include "bapolab/error.hpp"

namespace bapolab::theory {

namespace {

void check_prefix(const EnvSpec& spec, const StateId& state) {
  if (static_cast<int>(state.prefix.size()) >= spec.horizon)
    throw DomainError(msg("state ", state, " is terminal: prefix length must be < horizon ",
                          spec.horizon));
}

// g(y) = A(y) * X(y) over the full vocabulary; absent tokens stay 0.
std::vector<double> masked_advantages(int vocab_size, std::span<const TokenOutcome> outcomes) {
  std::vector<double> g(static_cast<std::size_t>(vocab_size), 0.0);
  std::vector<bool> seen(static_cast<std::size_t>(vocab_size), false);
  for (const auto& o : outcomes) {
    if (o.token < 0 || o.token >= vocab_size)
      throw DomainError(msg("token ", o.token, " out of range [0, ", vocab_size, ")"));
    if (seen[static_cast<std::size_t>(o.token)])
      throw DomainError(msg("duplicate outcome for token ", o.token));
    seen[static_cast<std::size_t>(o.token)] = true;
    if (o.retained) g[static_cast<std::size_t>(o.token)] = o.advantage;
  }
  return g;
}

}  // namespace

ExactValueTable exact_advantages(const PolicyTable& policy, const EnvSpec& spec, const StateId& state) {
  check_prefix(spec, state);
  if (policy.vocab_size() != spec.vocab_size)
    throw DomainError("policy vocab_size does not match env spec");
  const int remaining = spec.horizon - static_cast<int>(state.prefix.size());
  double count = 1.0;
  for (int t = 0; t < remaining; ++t) count *= spec.vocab_size;
  if (count > 1e6)
    throw DomainError(msg("enumeration bound exceeded: V^", remaining, " = ", count, " > 1e6"));

  const int vocab = spec.vocab_size;
  ExactValueTable table;
  table.q.assign(static_cast<std::size_t>(vocab), 0.0);

  Trajectory traj;
  traj.prompt_id = state.prompt_id;
  traj.complete = true;
  traj.tokens = state.prefix;
  traj.tokens.resize(static_cast<std::size_t>(spec.horizon), 0);

  StateId cursor = state;
  const std::size_t depth0 = state.prefix.size();
  auto dfs = [&](auto&& self, std::size_t depth, double prob, double& sink) -> void {
    if (depth == static_cast<std::size_t>(spec.horizon)) {
      sink += prob * evaluate_reward(spec, traj);
      return;
    }
    const auto p = policy.probs_or_uniform(cursor);
    for (int y = 0; y < vocab; ++y) {
      traj.tokens[depth] = y;
      cursor.prefix.push_back(y);
      self(self, depth + 1, prob * p[static_cast<std::size_t>(y)], sink);
      cursor.prefix.pop_back();
    }
  };

  const auto root_probs = policy.probs_or_uniform(state);
  for (int y = 0; y < vocab; ++y) {
    traj.tokens[depth0] = y;
    cursor.prefix.push_back(y);
    // Q(y) is the reward expectation over continuations, so the first-token
    // probability is deliberately not folded in.
    dfs(dfs, depth0 + 1, 1.0, table.q[static_cast<std::size_t>(y)]);
    cursor.prefix.pop_back();
  }

  table.v = 0.0;
  for (int y = 0; y < vocab; ++y)
    table.v += root_probs[static_cast<std::size_t>(y)] * table.q[static_cast<std::size_t>(y)];
  table.advantage.resize(static_cast<std::size_t>(vocab));
  for (int y = 0; y < vocab; ++y)
    table.advantage[static_cast<std::size_t>(y)] = table.q[static_cast<std::size_t>(y)] - table.v;
  return table;
}

EntropyPrediction predict_entropy_delta(const PolicyTable& policy, const StateId& state,
                                        std::span<const TokenOutcome> outcomes, double learning_rate) {
  if (!(learning_rate > 0.0))
    throw DomainError(msg("learning_rate must be > 0, got ", learning_rate));
  const auto g = masked_advantages(policy.vocab_size(), outcomes);
  const auto lp = policy.log_probs(state);
  const int vocab = policy.vocab_size();

  double mean_logp = 0.0, mean_g = 0.0;
  std::vector<double> p(lp.size());
  for (int y = 0; y < vocab; ++y) {
    p[static_cast<std::size_t>(y)] = std::exp(lp[static_cast<std::size_t>(y)]);
    mean_logp += p[static_cast<std::size_t>(y)] * lp[static_cast<std::size_t>(y)];
    mean_g += p[static_cast<std::size_t>(y)] * g[static_cast<std::size_t>(y)];
  }
  double cov = 0.0;
  for (int y = 0; y < vocab; ++y)
    cov += p[static_cast<std::size_t>(y)] * (lp[static_cast<std::size_t>(y)] - mean_logp) *
           (g[static_cast<std::size_t>(y)] - mean_g);

  EntropyPrediction out;
  out.covariance = cov;
  out.predicted_delta = -learning_rate * cov;
  for (const auto& o : outcomes)
    if (!o.retained) out.constant_c += p[static_cast<std::size_t>(o.token)] * o.advantage;
  return out;
}

GradientTable entropy_rule_update(const PolicyTable& policy, const StateId& state,
                                  std::span<const TokenOutcome> outcomes) {
  GradientTable grad;
  grad.entries.emplace(state, masked_advantages(policy.vocab_size(), outcomes));
  return grad;
}

double measured_entropy_delta(const PolicyTable& policy, const StateId& state,
                              std::span<const TokenOutcome> outcomes, double learning_rate) {
  PolicyTable stepped = policy;
  const double before = stepped.state_entropy(state);
  stepped.apply_gradient(entropy_rule_update(policy, state, outcomes), learning_rate);
  return stepped.state_entropy(state) - before;
}

Prop1Report verify_logit_delta_identity(const PolicyTable& policy, const StateId& state,
                                        std::span<const double> advantages, const ClipBounds& bounds,
                                        double learning_rate) {
  const int vocab = policy.vocab_size();
  if (static_cast<int>(advantages.size()) != vocab)
    throw DomainError(msg("need one advantage per vocabulary token (", vocab, "), got ",
                          advantages.size()));
  const auto p = policy.probs(state);

  // Center so the pi-weighted advantage expectation vanishes.
  double mean = 0.0;
  for (int y = 0; y < vocab; ++y)
    mean += p[static_cast<std::size_t>(y)] * advantages[static_cast<std::size_t>(y)];
  std::vector<double> adv(advantages.begin(), advantages.end());
  for (double& a : adv) a -= mean;

  // One record per token against a uniform behavior snapshot; with the
  // token-mean aggregation the empirical gradient reduces to the
  // pi-weighted vocabulary sum the identity is stated for.
  const double uniform_logp = -std::log(static_cast<double>(vocab));
  RolloutBatch batch;
  batch.group_size = vocab;
  batch.num_trajectories = 1;
  for (int y = 0; y < vocab; ++y) {
    TokenRecord rec;
    rec.state = state;
    rec.token = y;
    rec.behavior_log_prob = uniform_logp;
    rec.behavior_version = 0;
    rec.advantage = adv[static_cast<std::size_t>(y)];
    batch.records.push_back(std::move(rec));
  }

  const auto lp = policy.log_probs(state);
  Prop1Report report;
  std::vector<int> indicator(static_cast<std::size_t>(vocab), 0);
  for (int y = 0; y < vocab; ++y) {
    // Same expression the objective uses, so the clip decision cannot differ.
    const double ratio = std::exp(lp[static_cast<std::size_t>(y)] - uniform_logp);
    indicator[static_cast<std::size_t>(y)] =
        clip_indicator(ratio, adv[static_cast<std::size_t>(y)], bounds);
    if (indicator[static_cast<std::size_t>(y)] == 1) {
      ++report.retained_tokens;
    } else {
      ++report.clipped_tokens;
      report.constant_c += p[static_cast<std::size_t>(y)] * adv[static_cast<std::size_t>(y)];
    }
  }

  PolicyTable stepped = policy;
  const std::vector<double> before = stepped.logits(state);
  ObjectiveOptions options;
  options.loss_agg = LossAgg::token_mean;
  auto grad = batch_gradient(stepped, batch, bounds, options).first;
  stepped.apply_gradient(grad, learning_rate);
  const std::vector<double>& after = stepped.logits(state);

  for (int y = 0; y < vocab; ++y) {
    const double actual = after[static_cast<std::size_t>(y)] - before[static_cast<std::size_t>(y)];
    const double predicted = learning_rate * p[static_cast<std::size_t>(y)] *
                             (adv[static_cast<std::size_t>(y)] * indicator[static_cast<std::size_t>(y)] +
                              report.constant_c);
    report.max_abs_deviation = std::max(report.max_abs_deviation, std::abs(actual - predicted));
  }
  return report;
}

TokenClass classify_token(const PolicyTable& policy, const StateId& state, int token, double advantage,
                          std::span<const TokenOutcome> outcomes) {
  const auto lp = policy.log_probs(state);
  const int vocab = policy.vocab_size();
  if (token < 0 || token >= vocab) throw DomainError(msg("token ", token, " out of range"));

  bool token_retained = false;
  double retained_mean = 0.0;  // pi-weighted sum over the retained set
  int retained_count = 0;
  for (const auto& o : outcomes) {
    if (!o.retained) continue;
    ++retained_count;
    retained_mean += std::exp(lp[static_cast<std::size_t>(o.token)]) * o.advantage;
    if (o.token == token) token_retained = true;
  }
  if (retained_count == 0) throw DomainError("classification needs a nonempty retained set");
  if (!token_retained)
    throw DomainError(msg("token ", token, " was clipped; classification is defined only for retained tokens"));

  double mean_logp = 0.0;
  for (int y = 0; y < vocab; ++y)
    mean_logp += std::exp(lp[static_cast<std::size_t>(y)]) * lp[static_cast<std::size_t>(y)];

  TokenClass cls;
  cls.prob_class = lp[static_cast<std::size_t>(token)] > mean_logp ? Level::high : Level::low;
  cls.adv_class = advantage > retained_mean ? Level::high : Level::low;
  cls.predicted_entropy_sign =
      cls.prob_class == cls.adv_class ? EntropySign::decrease : EntropySign::increase;
  return cls;
}

SignTableReport verify_sign_table(int trials, RngStream rng) {
  if (trials < 1) throw DomainError(msg("trials must be >= 1, got ", trials));
  SignTableReport report;
  constexpr double kBoundaryTol = 1e-12;
  for (int trial = 0; trial < trials; ++trial) {
    RngStream stream = rng.derive(static_cast<std::uint64_t>(trial));
    const int vocab = 3 + static_cast<int>(stream.next_u64() % 6);  // V in {3..8}
    PolicyTable policy(vocab);
    const StateId state{0, {}};
    std::vector<double> logits(static_cast<std::size_t>(vocab));
    for (double& z : logits) z = 1.5 * stream.next_normal();
    policy.set_logits(state, logits);

    std::vector<TokenOutcome> outcomes;
    for (int y = 0; y < vocab; ++y) {
      TokenOutcome o;
      o.token = y;
      o.advantage = stream.next_normal();
      o.retained = stream.next_double() < 0.7;
      outcomes.push_back(o);
    }
    if (std::none_of(outcomes.begin(), outcomes.end(), [](const auto& o) { return o.retained; }))
      outcomes[0].retained = true;

    const auto lp = policy.log_probs(state);
    double mean_logp = 0.0;
    for (int y = 0; y < vocab; ++y)
      mean_logp += std::exp(lp[static_cast<std::size_t>(y)]) * lp[static_cast<std::size_t>(y)];
    double retained_mean = 0.0;
    for (const auto& o : outcomes)
      if (o.retained) retained_mean += std::exp(lp[static_cast<std::size_t>(o.token)]) * o.advantage;

    for (const auto& o : outcomes) {
      if (!o.retained) continue;
      const double prob = std::exp(lp[static_cast<std::size_t>(o.token)]);
      const double factor_prob = prob * (lp[static_cast<std::size_t>(o.token)] - mean_logp);
      const double factor_adv = o.advantage - retained_mean;
      if (std::abs(factor_prob) < kBoundaryTol || std::abs(factor_adv) < kBoundaryTol) {
        ++report.boundary_skipped;
        continue;
      }
      const double contribution = -factor_prob * factor_adv;  // eta = 1; only the sign matters
      const auto cls = classify_token(policy, state, o.token, o.advantage, outcomes);
      const bool predicted_decrease = cls.predicted_entropy_sign == EntropySign::decrease;
      ++report.checked;
      if (predicted_decrease != (contribution < 0.0)) ++report.violations;
    }
  }
  return report;
}

}  // namespace bapolab::theory
