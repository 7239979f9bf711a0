#include "bapolab/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "bapolab/env.hpp"
#include "bapolab/error.hpp"
#include "bapolab/metrics.hpp"
#include "bapolab/theory.hpp"

namespace bapolab::verify {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<double> random_logits(int vocab, RngStream& rng, double scale = 1.5) {
  std::vector<double> z(static_cast<std::size_t>(vocab));
  for (double& v : z) v = scale * rng.next_normal();
  return z;
}

// All prefixes of length < horizon for one prompt.
std::vector<StateId> all_states(const EnvSpec& spec, int prompt_id) {
  std::vector<StateId> states;
  StateId cursor{prompt_id, {}};
  auto dfs = [&](auto&& self) -> void {
    states.push_back(cursor);
    if (static_cast<int>(cursor.prefix.size()) == spec.horizon - 1) return;
    for (int y = 0; y < spec.vocab_size; ++y) {
      cursor.prefix.push_back(y);
      self(self);
      cursor.prefix.pop_back();
    }
  };
  dfs(dfs);
  return states;
}

}  // namespace

RandomBatch make_random_batch(RngStream rng) {
  for (int attempt = 0;; ++attempt) {
    if (attempt > 200) throw NumericError("make_random_batch: could not build a usable batch");
    RngStream stream = rng.derive(static_cast<std::uint64_t>(attempt));
    const int vocab = 3 + static_cast<int>(stream.next_u64() % 6);    // {3..8}
    const int horizon = 2 + static_cast<int>(stream.next_u64() % 3);  // {2..4}
    const int group_size = 6;
    const int prompts = 2;
    const EnvSpec spec = EnvSpec::make(prompts, vocab, horizon, RewardMode::parity,
                                       stream.next_u64());

    PolicyTable policy(vocab);
    // Behavior policy: random logits materialized on the visited states.
    PolicyTable snapshot = policy;
    std::vector<GroupSample> groups;
    for (int p = 0; p < prompts; ++p) {
      // Pre-seed the root so sampling starts from a non-uniform policy.
      StateId root{p, {}};
      snapshot.set_logits(root, random_logits(vocab, stream));
      groups.push_back(generate_group(snapshot, spec, p, group_size,
                                      stream.derive(1000 + static_cast<std::uint64_t>(p))));
    }
    RolloutBatch batch = assemble_batch(groups, 0, true);

    // Drift the current policy away from the snapshot.
    policy = snapshot;
    for (const auto& [state, z] : snapshot.table()) {
      std::vector<double> drifted = z;
      for (double& v : drifted) v += 0.4 * stream.next_normal();
      policy.set_logits(state, drifted);
    }

    const ClipBounds bounds{0.7 + 0.25 * stream.next_double(), 1.05 + 0.8 * stream.next_double()};

    // Need signal on both sides, a clipped/unclipped mix, and ratios clear
    // of the kinks so finite differences are valid.
    int pos = 0, neg = 0, clipped = 0, retained = 0;
    bool near_kink = false;
    for (const auto& rec : batch.records) {
      const double r = std::exp(policy.log_prob(rec.state, rec.token) - rec.behavior_log_prob);
      if (std::abs(r - bounds.c_low) < 1e-4 || std::abs(r - bounds.c_high) < 1e-4) near_kink = true;
      if (rec.advantage > 0.0) ++pos;
      if (rec.advantage < 0.0) ++neg;
      if (rec.advantage != 0.0) {
        if (clip_indicator(r, rec.advantage, bounds) == 1)
          ++retained;
        else
          ++clipped;
      }
    }
    if (near_kink || pos == 0 || neg == 0 || clipped == 0 || retained == 0) continue;
    return RandomBatch{std::move(policy), std::move(batch), bounds};
  }
}

double gradient_fd_rel_error(const PolicyTable& policy, const RolloutBatch& batch,
                             const ClipBounds& bounds, const ObjectiveOptions& options,
                             double step, double fault) {
  const GradientTable grad = batch_gradient(policy, batch, bounds, options).first;

  // Touched states: every record state (clipped-only states have an all-zero
  // analytic gradient, and finite differences must agree).
  std::vector<StateId> states;
  for (const auto& rec : batch.records) states.push_back(rec.state);
  std::sort(states.begin(), states.end());
  states.erase(std::unique(states.begin(), states.end()), states.end());

  double grad_scale = 0.0;
  for (const auto& [state, vec] : grad.entries)
    for (double g : vec) grad_scale = std::max(grad_scale, std::abs(g));
  grad_scale = std::max(grad_scale, 1e-12);

  bool fault_pending = fault != 0.0;
  double worst = 0.0;
  PolicyTable probe = policy;
  for (const auto& state : states) {
    const std::vector<double> base = policy.logits(state);
    const auto grad_it = grad.entries.find(state);
    for (int y = 0; y < policy.vocab_size(); ++y) {
      std::vector<double> z = base;
      z[static_cast<std::size_t>(y)] = base[static_cast<std::size_t>(y)] + step;
      probe.set_logits(state, z);
      const double up = batch_objective(probe, batch, bounds, options);
      z[static_cast<std::size_t>(y)] = base[static_cast<std::size_t>(y)] - step;
      probe.set_logits(state, z);
      const double down = batch_objective(probe, batch, bounds, options);
      probe.set_logits(state, base);

      const double fd = (up - down) / (2.0 * step);
      double analytic =
          grad_it == grad.entries.end() ? 0.0 : grad_it->second[static_cast<std::size_t>(y)];
      if (fault_pending) {
        analytic += fault;
        fault_pending = false;
      }
      worst = std::max(worst, std::abs(fd - analytic) / grad_scale);
    }
  }
  return worst;
}

double log_prob_gradient_fd_error(int pairs, RngStream rng, double step) {
  double worst = 0.0;
  for (int i = 0; i < pairs; ++i) {
    RngStream stream = rng.derive(static_cast<std::uint64_t>(i));
    const int vocab = 2 + static_cast<int>(stream.next_u64() % 7);
    PolicyTable policy(vocab);
    const StateId state{0, {}};
    policy.set_logits(state, random_logits(vocab, stream));
    const int token = static_cast<int>(stream.next_u64() % static_cast<std::uint64_t>(vocab));

    const auto analytic = policy.log_prob_gradient(state, token);
    const std::vector<double> base = policy.logits(state);
    for (int y = 0; y < vocab; ++y) {
      std::vector<double> z = base;
      z[static_cast<std::size_t>(y)] += step;
      policy.set_logits(state, z);
      const double up = policy.log_prob(state, token);
      z[static_cast<std::size_t>(y)] = base[static_cast<std::size_t>(y)] - step;
      policy.set_logits(state, z);
      const double down = policy.log_prob(state, token);
      policy.set_logits(state, base);
      const double fd = (up - down) / (2.0 * step);
      worst = std::max(worst, std::abs(fd - analytic[static_cast<std::size_t>(y)]));
    }
  }
  return worst;
}

namespace {

CheckResult check_lemma2(const VerifyOptions& options) {
  const auto start = Clock::now();
  CheckResult res;
  res.name = "lemma2_softmax_log_derivative";
  res.tolerance = 1e-8 * options.tolerance_scale;
  res.worst = log_prob_gradient_fd_error(options.trials, RngStream(options.seed).derive(1));
  res.passed = res.worst < res.tolerance;
  res.detail = msg(options.trials, " random (state, token) pairs, h=1e-6");
  res.seconds = seconds_since(start);
  return res;
}

CheckResult check_lemma3(const VerifyOptions& options) {
  const auto start = Clock::now();
  CheckResult res;
  res.name = "lemma3_advantage_expectation";
  res.tolerance = 1e-12 * options.tolerance_scale;
  RngStream rng = RngStream(options.seed).derive(2);
  int states_checked = 0;
  for (int e = 0; e < options.envs; ++e) {
    RngStream stream = rng.derive(static_cast<std::uint64_t>(e));
    const int vocab = 2 + static_cast<int>(stream.next_u64() % 3);    // {2..4}
    const int horizon = 2 + static_cast<int>(stream.next_u64() % 3);  // {2..4}
    const RewardMode mode = stream.next_double() < 0.5 ? RewardMode::parity : RewardMode::exact_match;
    const EnvSpec spec = EnvSpec::make(2, vocab, horizon, mode, stream.next_u64());
    for (int prompt = 0; prompt < spec.num_prompts; ++prompt) {
      PolicyTable policy(vocab);
      for (const auto& state : all_states(spec, prompt))
        policy.set_logits(state, random_logits(vocab, stream));
      for (const auto& state : all_states(spec, prompt)) {
        const auto table = theory::exact_advantages(policy, spec, state);
        const auto probs = policy.probs(state);
        double expectation = 0.0;
        for (int y = 0; y < vocab; ++y)
          expectation += probs[static_cast<std::size_t>(y)] * table.advantage[static_cast<std::size_t>(y)];
        res.worst = std::max(res.worst, std::abs(expectation));
        ++states_checked;
      }
    }
  }
  res.passed = res.worst < res.tolerance;
  res.detail = msg(states_checked, " states across ", options.envs, " random envs");
  res.seconds = seconds_since(start);
  return res;
}

CheckResult check_gradient_fd(const VerifyOptions& options) {
  const auto start = Clock::now();
  CheckResult res;
  res.name = "surrogate_gradient_vs_finite_diff";
  res.tolerance = 1e-6 * options.tolerance_scale;
  RngStream rng = RngStream(options.seed).derive(3);
  for (int i = 0; i < options.batches; ++i) {
    const RandomBatch rb = make_random_batch(rng.derive(static_cast<std::uint64_t>(i)));
    const double fault = options.inject_gradient_fault && i == 0 ? 1e-3 : 0.0;
    const double err =
        gradient_fd_rel_error(rb.policy, rb.batch, rb.bounds, ObjectiveOptions{}, 1e-5, fault);
    res.worst = std::max(res.worst, err);
  }
  res.passed = res.worst < res.tolerance;
  res.detail = msg(options.batches, " random batches, central differences h=1e-5");
  res.seconds = seconds_since(start);
  return res;
}

CheckResult check_prop1(const VerifyOptions& options) {
  const auto start = Clock::now();
  CheckResult res;
  res.name = "prop1_logit_delta_identity";
  res.tolerance = 1e-10 * options.tolerance_scale;
  RngStream rng = RngStream(options.seed).derive(4);
  int zero_quota = options.batches, one_quota = options.batches, many_quota = options.batches;
  std::uint64_t attempt = 0;
  while (zero_quota > 0 || one_quota > 0 || many_quota > 0) {
    if (++attempt > 200000ull) {
      res.detail = "instance generation exhausted";
      res.passed = false;
      res.seconds = seconds_since(start);
      return res;
    }
    RngStream stream = rng.derive(attempt);
    const int vocab = 3 + static_cast<int>(stream.next_u64() % 6);
    PolicyTable policy(vocab);
    const StateId state{0, {}};
    policy.set_logits(state, random_logits(vocab, stream));
    std::vector<double> adv(static_cast<std::size_t>(vocab));
    for (double& a : adv) a = stream.next_normal();
    const ClipBounds bounds{0.5 + 0.45 * stream.next_double(), 1.05 + 0.95 * stream.next_double()};

    const auto report =
        theory::verify_logit_delta_identity(policy, state, adv, bounds, 0.1);
    int* quota = report.clipped_tokens == 0   ? &zero_quota
                 : report.clipped_tokens == 1 ? &one_quota
                                              : &many_quota;
    if (*quota <= 0) continue;
    --*quota;
    res.worst = std::max(res.worst, report.max_abs_deviation);
  }
  res.passed = res.worst < res.tolerance;
  res.detail = msg(options.batches, " instances each with zero / one / many clipped tokens");
  res.seconds = seconds_since(start);
  return res;
}

CheckResult check_entropy_rule(const VerifyOptions& options) {
  const auto start = Clock::now();
  CheckResult res;
  res.name = "entropy_clip_rule_first_order";
  res.tolerance = 0.05;  // relative prediction error at eta = 1e-4
  RngStream rng = RngStream(options.seed).derive(5);
  const std::vector<double> etas{1e-2, 1e-3, 1e-4};
  std::vector<double> mean_err(etas.size(), 0.0);
  double worst_rel = 0.0;
  int made = 0;
  std::uint64_t attempt = 0;
  while (made < options.batches) {
    if (++attempt > 200000ull) break;
    RngStream stream = rng.derive(attempt);
    const int vocab = 3 + static_cast<int>(stream.next_u64() % 6);
    PolicyTable policy(vocab);
    const StateId state{0, {}};
    policy.set_logits(state, random_logits(vocab, stream));
    std::vector<theory::TokenOutcome> outcomes;
    for (int y = 0; y < vocab; ++y)
      outcomes.push_back({y, stream.next_normal(), stream.next_double() < 0.7});
    if (std::none_of(outcomes.begin(), outcomes.end(), [](const auto& o) { return o.retained; }))
      outcomes[0].retained = true;

    const auto prediction = theory::predict_entropy_delta(policy, state, outcomes, 1.0);
    if (std::abs(prediction.covariance) < 0.02) continue;  // "nonzero covariance" instances
    ++made;
    for (std::size_t k = 0; k < etas.size(); ++k) {
      const double eta = etas[k];
      const double actual = theory::measured_entropy_delta(policy, state, outcomes, eta);
      const double predicted = -eta * prediction.covariance;
      const double err = std::abs(actual - predicted);
      mean_err[k] += err;
      if (eta == 1e-4) worst_rel = std::max(worst_rel, err / std::abs(predicted));
    }
  }
  for (double& e : mean_err) e /= std::max(made, 1);

  // Least-squares slope of log(mean error) against log(eta).
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < etas.size(); ++k) {
    const double x = std::log(etas[k]);
    const double y = std::log(std::max(mean_err[k], 1e-300));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(etas.size());
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);

  res.worst = worst_rel;
  res.passed = made == options.batches && slope >= 1.8 && slope <= 2.2 && worst_rel <= res.tolerance;
  res.detail = msg("slope=", slope, " over eta {1e-2,1e-3,1e-4}; ", made,
                   " instances; worst rel err at 1e-4 = ", worst_rel);
  res.seconds = seconds_since(start);
  return res;
}

CheckResult check_sign_table(const VerifyOptions& options) {
  const auto start = Clock::now();
  CheckResult res;
  res.name = "table3_entropy_sign_law";
  res.tolerance = 0.0;
  const auto report = theory::verify_sign_table(options.trials, RngStream(options.seed).derive(6));
  res.worst = report.violations;
  res.passed = report.violations == 0 && report.checked > 0;
  res.detail = msg(report.checked, " retained tokens checked, ", report.boundary_skipped,
                   " boundary tokens skipped");
  res.seconds = seconds_since(start);
  return res;
}

CheckResult check_clipped_nullity(const VerifyOptions& options) {
  const auto start = Clock::now();
  CheckResult res;
  res.name = "clipped_token_nullity";
  res.tolerance = 0.0;
  RngStream rng = RngStream(options.seed).derive(7);
  for (int i = 0; i < options.trials; ++i) {
    RngStream stream = rng.derive(static_cast<std::uint64_t>(i));
    const int vocab = 3 + static_cast<int>(stream.next_u64() % 6);
    PolicyTable policy(vocab);
    const StateId state{0, {}};
    policy.set_logits(state, random_logits(vocab, stream));
    std::vector<theory::TokenOutcome> outcomes;
    bool any_clipped = false;
    for (int y = 0; y < vocab; ++y) {
      const bool retained = stream.next_double() < 0.5;
      any_clipped |= !retained;
      outcomes.push_back({y, stream.next_normal(), retained});
    }
    if (std::none_of(outcomes.begin(), outcomes.end(), [](const auto& o) { return o.retained; }))
      outcomes[0].retained = true;
    if (!any_clipped) outcomes.back().retained = false;

    const double cov = theory::predict_entropy_delta(policy, state, outcomes, 1.0).covariance;
    auto perturbed = outcomes;
    for (auto& o : perturbed)
      if (!o.retained) o.advantage += 1000.0 * (stream.next_double() - 0.5);
    const double cov2 = theory::predict_entropy_delta(policy, state, perturbed, 1.0).covariance;
    res.worst = std::max(res.worst, std::abs(cov2 - cov));
  }
  res.passed = res.worst == 0.0;
  res.detail = msg(options.trials, " instances; clipped-token advantages perturbed by up to 500");
  res.seconds = seconds_since(start);
  return res;
}

}  // namespace

double tolerance_scale_for_profile(const std::string& profile) {
  if (profile == "default") return 1.0;
  if (profile == "strict") return 0.1;
  throw DomainError(msg("unknown tolerance profile '", profile, "' (expected default or strict)"));
}

std::vector<CheckResult> run_all_checks(const VerifyOptions& options) {
  std::vector<CheckResult> results;
  results.push_back(check_lemma2(options));
  results.push_back(check_lemma3(options));
  results.push_back(check_gradient_fd(options));
  results.push_back(check_prop1(options));
  results.push_back(check_entropy_rule(options));
  results.push_back(check_sign_table(options));
  results.push_back(check_clipped_nullity(options));
  return results;
}

bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; });
}

std::string results_table(const std::vector<CheckResult>& results) {
  std::ostringstream os;
  for (const auto& r : results) {
    os << (r.passed ? "[PASS] " : "[FAIL] ") << r.name << " (worst=" << r.worst
       << ", tol=" << r.tolerance << ", " << r.detail << ", " << r.seconds << "s)\n";
  }
  return os.str();
}

std::string results_csv(const std::vector<CheckResult>& results) {
  std::ostringstream os;
  os << "check,passed,worst_error,tolerance,seconds\n";
  for (const auto& r : results)
    os << r.name << ',' << (r.passed ? 1 : 0) << ',' << format_double(r.worst) << ','
       << format_double(r.tolerance) << ',' << format_double(r.seconds) << '\n';
  return os.str();
}

}  // namespace bapolab::verify
