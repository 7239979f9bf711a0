#include <doctest.h>

#include <cmath>
#include <vector>

#include "bapolab/env.hpp"
#include "bapolab/error.hpp"
#include "bapolab/theory.hpp"

using namespace bapolab;
using namespace bapolab::theory;

namespace {

PolicyTable root_policy(const std::vector<double>& logits) {
  PolicyTable policy(static_cast<int>(logits.size()));
  policy.set_logits(StateId{0, {}}, logits);
  return policy;
}

const StateId kRoot{0, {}};

}  // namespace

TEST_CASE("exact advantages at a terminal-adjacent parity state") {
  EnvSpec spec = EnvSpec::make(1, 2, 1, RewardMode::parity, 0);
  spec.targets[0] = {1};
  const PolicyTable policy = root_policy({0.4, -0.3});
  const auto table = exact_advantages(policy, spec, kRoot);

  CHECK(table.q[0] == 0.0);
  CHECK(table.q[1] == 1.0);
  const auto p = policy.probs(kRoot);
  CHECK(table.v == doctest::Approx(p[1]).epsilon(1e-15));
  CHECK(table.advantage[0] == doctest::Approx(-p[1]).epsilon(1e-15));
  CHECK(table.advantage[1] == doctest::Approx(1.0 - p[1]).epsilon(1e-15));

  double expectation = 0.0;
  for (int y = 0; y < 2; ++y)
    expectation += p[static_cast<std::size_t>(y)] * table.advantage[static_cast<std::size_t>(y)];
  CHECK(std::abs(expectation) < 1e-12);
}

TEST_CASE("constant continuation rewards give all-zero advantages") {
  // Prefix already off target: every continuation is rewarded 0.
  EnvSpec spec = EnvSpec::make(1, 3, 3, RewardMode::exact_match, 0);
  spec.targets[0] = {2, 2, 2};
  PolicyTable policy(3);
  const StateId state{0, {0}};
  policy.set_logits(state, {0.3, -0.1, 0.5});
  const auto table = exact_advantages(policy, spec, state);
  for (double a : table.advantage) CHECK(a == 0.0);
  CHECK(table.v == 0.0);
}

TEST_CASE("exact advantages: expectation identity and V = E[Q] on random instances") {
  RngStream rng(61);
  for (int trial = 0; trial < 40; ++trial) {
    RngStream stream = rng.derive(static_cast<std::uint64_t>(trial));
    const int vocab = 2 + static_cast<int>(stream.next_u64() % 3);
    const int horizon = 2 + static_cast<int>(stream.next_u64() % 3);
    const RewardMode mode =
        stream.next_double() < 0.5 ? RewardMode::parity : RewardMode::exact_match;
    const EnvSpec spec = EnvSpec::make(1, vocab, horizon, mode, stream.next_u64());
    PolicyTable policy(vocab);
    StateId state{0, {}};
    const int depth = static_cast<int>(stream.next_u64() % static_cast<std::uint64_t>(horizon));
    for (int t = 0; t < depth; ++t)
      state.prefix.push_back(static_cast<int>(stream.next_u64() % static_cast<std::uint64_t>(vocab)));
    std::vector<double> logits(static_cast<std::size_t>(vocab));
    for (double& z : logits) z = 1.5 * stream.next_normal();
    policy.set_logits(state, logits);

    const auto table = exact_advantages(policy, spec, state);
    const auto p = policy.probs(state);
    double ea = 0.0, eq = 0.0;
    for (int y = 0; y < vocab; ++y) {
      ea += p[static_cast<std::size_t>(y)] * table.advantage[static_cast<std::size_t>(y)];
      eq += p[static_cast<std::size_t>(y)] * table.q[static_cast<std::size_t>(y)];
    }
    CHECK(std::abs(ea) < 1e-12);
    CHECK(eq == doctest::Approx(table.v).epsilon(1e-12));
  }
}

TEST_CASE("exact advantages refuse oversized enumerations and terminal states") {
  const EnvSpec spec = EnvSpec::make(1, 10, 7, RewardMode::parity, 0);
  PolicyTable policy(10);
  CHECK_THROWS_AS(exact_advantages(policy, spec, kRoot), DomainError);

  const EnvSpec small = EnvSpec::make(1, 2, 1, RewardMode::parity, 0);
  PolicyTable p2(2);
  CHECK_THROWS_AS(exact_advantages(p2, small, StateId{0, {1}}), DomainError);
}

TEST_CASE("entropy prediction is zero when the retained advantage is constant") {
  const PolicyTable policy = root_policy({0.5, -0.2, 0.9, 0.0});
  std::vector<TokenOutcome> outcomes;
  for (int y = 0; y < 4; ++y) outcomes.push_back({y, 0.75, true});
  const auto prediction = predict_entropy_delta(policy, kRoot, outcomes, 0.01);
  CHECK(std::abs(prediction.covariance) < 1e-14);
  CHECK(std::abs(prediction.predicted_delta) < 1e-16);
}

TEST_CASE("a single high-probability high-advantage token lowers entropy") {
  const PolicyTable policy = root_policy({std::log(0.7), std::log(0.2), std::log(0.1)});
  const std::vector<TokenOutcome> outcomes{{0, 1.0, true}};
  const auto prediction = predict_entropy_delta(policy, kRoot, outcomes, 0.01);
  CHECK(prediction.predicted_delta < 0.0);
}

TEST_CASE("entropy prediction error shrinks quadratically in the step size") {
  const PolicyTable policy = root_policy({0.8, -0.4, 0.1, -0.9, 0.3});
  const std::vector<TokenOutcome> outcomes{
      {0, 1.2, true}, {1, -0.7, true}, {2, 0.4, false}, {3, -1.5, true}, {4, 0.9, false}};
  const auto prediction = predict_entropy_delta(policy, kRoot, outcomes, 1.0);
  REQUIRE(std::abs(prediction.covariance) > 0.01);

  const auto err = [&](double eta) {
    return std::abs(measured_entropy_delta(policy, kRoot, outcomes, eta) -
                    (-eta * prediction.covariance));
  };
  CHECK(err(1e-2) / err(1e-3) == doctest::Approx(100.0).epsilon(0.25));
  CHECK(err(1e-3) / err(1e-4) == doctest::Approx(100.0).epsilon(0.25));
}

TEST_CASE("clipped tokens cannot move the covariance") {
  const PolicyTable policy = root_policy({0.2, -0.6, 1.1, 0.0});
  std::vector<TokenOutcome> outcomes{
      {0, 0.5, true}, {1, -2.0, false}, {2, 1.5, true}, {3, -0.3, false}};
  const double cov = predict_entropy_delta(policy, kRoot, outcomes, 1.0).covariance;
  outcomes[1].advantage = 500.0;
  outcomes[3].advantage = -123.0;
  CHECK(predict_entropy_delta(policy, kRoot, outcomes, 1.0).covariance == cov);
  // constant_c does see them, by design.
  CHECK(predict_entropy_delta(policy, kRoot, outcomes, 1.0).constant_c != 0.0);
}

TEST_CASE("logit-delta identity: no clipping, one clipped token, zero advantages") {
  const PolicyTable policy = root_policy({0.4, -0.2, 0.7, -0.5});

  // Wide bounds: nothing clipped, C is the clause-free 0.
  const auto none = verify_logit_delta_identity(policy, kRoot, std::vector<double>{1.0, -0.5, 0.25, -0.75},
                                                ClipBounds{0.01, 50.0}, 0.1);
  CHECK(none.clipped_tokens == 0);
  CHECK(none.constant_c == 0.0);
  CHECK(none.max_abs_deviation < 1e-10);

  // Bounds placed so some tokens clip; the C correction must still hold.
  const auto some = verify_logit_delta_identity(policy, kRoot, std::vector<double>{1.0, -0.5, 0.25, -0.75},
                                                ClipBounds{0.9, 1.1}, 0.1);
  CHECK(some.clipped_tokens > 0);
  CHECK(some.max_abs_deviation < 1e-10);

  const auto zero = verify_logit_delta_identity(policy, kRoot, std::vector<double>{0, 0, 0, 0},
                                                ClipBounds{0.8, 1.2}, 0.1);
  CHECK(zero.max_abs_deviation == 0.0);
}

TEST_CASE("classification thresholds are strict and match the sign table") {
  // Uniform policy: every token sits exactly on the probability boundary and
  // is classified low.
  const PolicyTable uniform = root_policy({0, 0, 0, 0});
  std::vector<TokenOutcome> outcomes;
  for (int y = 0; y < 4; ++y) outcomes.push_back({y, static_cast<double>(y), true});
  const auto cls = classify_token(uniform, kRoot, 1, 1.0, outcomes);
  CHECK(cls.prob_class == Level::low);

  // Spec cases on pi = (0.7, 0.2, 0.1).
  const PolicyTable skewed = root_policy({std::log(0.7), std::log(0.2), std::log(0.1)});
  const std::vector<TokenOutcome> retained{{0, 2.0, true}, {1, 0.1, true}, {2, 1.8, true}};
  const auto high_high = classify_token(skewed, kRoot, 0, 2.0, retained);
  CHECK(high_high.prob_class == Level::high);
  CHECK(high_high.adv_class == Level::high);
  CHECK(high_high.predicted_entropy_sign == EntropySign::decrease);

  const auto low_high = classify_token(skewed, kRoot, 2, 1.8, retained);
  CHECK(low_high.prob_class == Level::low);
  CHECK(low_high.adv_class == Level::high);
  CHECK(low_high.predicted_entropy_sign == EntropySign::increase);

  // Clipped tokens have no classification.
  const std::vector<TokenOutcome> with_clip{{0, 2.0, true}, {1, 0.1, false}};
  CHECK_THROWS_AS(classify_token(skewed, kRoot, 1, 0.1, with_clip), DomainError);
}

TEST_CASE("sign law holds on 1000 random instances") {
  const auto report = verify_sign_table(1000, RngStream(777));
  CHECK(report.violations == 0);
  CHECK(report.checked > 1000);
}

TEST_CASE("the probability sign function flips exactly at exp(C)") {
  const double c = -2.0;
  const auto f = [&](double x) { return x * (std::log(x) - c); };
  const double boundary = std::exp(c);
  CHECK(f(0.05) < 0.0);
  CHECK(f(boundary - 1e-6) < 0.0);
  CHECK(f(boundary + 1e-6) > 0.0);
  CHECK(f(0.9) > 0.0);
}
