#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "bapolab/error.hpp"
#include "bapolab/policy.hpp"
#include "bapolab/rng.hpp"

using namespace bapolab;

namespace {

// Independent high-precision softmax oracle (compensated summation).
double kahan_log_softmax(const std::vector<double>& z, int tok) {
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  double sum = 0.0, c = 0.0;
  for (double v : z) {
    const double y = std::exp(v - m) - c;
    const double t = sum + y;
    c = (t - sum) - y;
    sum = t;
  }
  return (z[static_cast<std::size_t>(tok)] - m) - std::log(sum);
}

PolicyTable make_policy(int vocab, const std::vector<double>& logits) {
  PolicyTable policy(vocab);
  policy.set_logits(StateId{0, {}}, logits);
  return policy;
}

const StateId kRoot{0, {}};

}  // namespace

TEST_CASE("log_prob matches closed forms and the compensated oracle") {
  CHECK(make_policy(4, {0, 0, 0, 0}).log_prob(kRoot, 2) ==
        doctest::Approx(-1.3862943611198906).epsilon(1e-12));
  CHECK(std::abs(make_policy(2, {1000, 0}).log_prob(kRoot, 0)) < 1e-9);

  const std::vector<double> z{0.3, -1.2, 2.0};
  const PolicyTable policy = make_policy(3, z);
  // Frozen from the oracle; both must agree.
  CHECK(policy.log_prob(kRoot, 1) == doctest::Approx(-3.4016712449527908).epsilon(1e-14));
  for (int tok = 0; tok < 3; ++tok)
    CHECK(policy.log_prob(kRoot, tok) ==
          doctest::Approx(kahan_log_softmax(z, tok)).epsilon(1e-14));
  for (int tok = 0; tok < 3; ++tok) CHECK(policy.log_prob(kRoot, tok) <= 0.0);
}

TEST_CASE("log_prob rejects unknown states and bad tokens") {
  const PolicyTable policy = make_policy(3, {0, 0, 0});
  CHECK_THROWS_AS(policy.log_prob(StateId{1, {2}}, 0), MissingStateError);
  CHECK_THROWS_AS(policy.log_prob(kRoot, 3), DomainError);
  CHECK_THROWS_AS(policy.log_prob(kRoot, -1), DomainError);
}

TEST_CASE("state_entropy: uniform, saturated, and oracle values") {
  CHECK(make_policy(4, {0, 0, 0, 0}).state_entropy(kRoot) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(make_policy(3, {800, 0, 0}).state_entropy(kRoot) == doctest::Approx(0.0).epsilon(1e-9));
  // Frozen from the direct-summation oracle.
  CHECK(make_policy(3, {1, 2, 3}).state_entropy(kRoot) ==
        doctest::Approx(0.83239558183993889).epsilon(1e-14));
}

TEST_CASE("entropy bounds hold on random policies") {
  RngStream rng(5);
  for (int i = 0; i < 200; ++i) {
    const int vocab = 2 + static_cast<int>(rng.next_u64() % 7);
    std::vector<double> z(static_cast<std::size_t>(vocab));
    for (double& v : z) v = 3.0 * rng.next_normal();
    const PolicyTable policy = make_policy(vocab, z);
    const double h = policy.state_entropy(kRoot);
    CHECK(h >= 0.0);
    CHECK(h <= std::log(static_cast<double>(vocab)) + 1e-12);
  }
}

TEST_CASE("normalization: softmax sums to one within 1e-12") {
  RngStream rng(6);
  for (int i = 0; i < 200; ++i) {
    const int vocab = 2 + static_cast<int>(rng.next_u64() % 7);
    std::vector<double> z(static_cast<std::size_t>(vocab));
    for (double& v : z) v = 4.0 * rng.next_normal();
    const auto p = make_policy(vocab, z).probs(kRoot);
    double sum = 0.0;
    for (double v : p) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("shift invariance: adding a constant moves no probability") {
  RngStream rng(7);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> z(5);
    for (double& v : z) v = 2.0 * rng.next_normal();
    const auto base = make_policy(5, z).probs(kRoot);
    std::vector<double> shifted = z;
    for (double& v : shifted) v += 13.75;
    const auto moved = make_policy(5, shifted).probs(kRoot);
    for (int y = 0; y < 5; ++y)
      CHECK(std::abs(base[static_cast<std::size_t>(y)] - moved[static_cast<std::size_t>(y)]) < 1e-12);
  }
}

TEST_CASE("sample_token: saturated, deterministic, and frequency-correct") {
  const PolicyTable saturated = make_policy(3, {50, 0, 0});
  RngStream rng(11);
  for (int i = 0; i < 1000; ++i) CHECK(saturated.sample_token(kRoot, rng) == 0);

  // Replay determinism.
  const PolicyTable policy = make_policy(4, {0.3, -0.2, 0.8, 0.0});
  RngStream a(77), b(77);
  for (int i = 0; i < 200; ++i) CHECK(policy.sample_token(kRoot, a) == policy.sample_token(kRoot, b));

  // 100k draws from the uniform policy: per-token frequency within 4 sigma.
  const PolicyTable uniform = make_policy(4, {0, 0, 0, 0});
  const int n = 100000;
  int counts[4] = {0, 0, 0, 0};
  RngStream rng2(13);
  for (int i = 0; i < n; ++i) ++counts[uniform.sample_token(kRoot, rng2)];
  const double p = 0.25;
  const double sigma = std::sqrt(p * (1 - p) / n);
  for (int y = 0; y < 4; ++y)
    CHECK(std::abs(static_cast<double>(counts[y]) / n - p) < 4.0 * sigma);
}

TEST_CASE("log_prob_gradient: closed forms and finite differences") {
  const auto g = make_policy(4, {0, 0, 0, 0}).log_prob_gradient(kRoot, 2);
  const std::vector<double> expected{-0.25, -0.25, 0.75, -0.25};
  for (int y = 0; y < 4; ++y)
    CHECK(g[static_cast<std::size_t>(y)] == doctest::Approx(expected[static_cast<std::size_t>(y)]).epsilon(1e-12));

  const auto g2 = make_policy(3, {60, 0, 0}).log_prob_gradient(kRoot, 0);
  for (int y = 0; y < 3; ++y) CHECK(std::abs(g2[static_cast<std::size_t>(y)]) < 1e-9);

  // Central differences with h = 1e-6 on a random instance.
  RngStream rng(17);
  std::vector<double> z{0.4, -1.1, 0.7, 2.2, -0.3};
  PolicyTable policy = make_policy(5, z);
  const int token = 3;
  const auto analytic = policy.log_prob_gradient(kRoot, token);
  const double h = 1e-6;
  for (int y = 0; y < 5; ++y) {
    std::vector<double> up = z, down = z;
    up[static_cast<std::size_t>(y)] += h;
    down[static_cast<std::size_t>(y)] -= h;
    const double fd = (make_policy(5, up).log_prob(kRoot, token) -
                       make_policy(5, down).log_prob(kRoot, token)) /
                      (2 * h);
    CHECK(std::abs(fd - analytic[static_cast<std::size_t>(y)]) < 1e-8);
  }
}

TEST_CASE("apply_gradient: zero gradient, single logit, errors") {
  PolicyTable policy = make_policy(3, {0.5, -0.25, 1.0});
  const auto before = policy.logits(kRoot);
  const auto v0 = policy.version();

  GradientTable zero;
  zero.entries.emplace(kRoot, std::vector<double>{0, 0, 0});
  policy.apply_gradient(zero, 0.1);
  CHECK(policy.logits(kRoot) == before);
  CHECK(policy.version() == v0 + 1);

  GradientTable push;
  push.entries.emplace(kRoot, std::vector<double>{1, 0, 0});
  policy.apply_gradient(push, 0.1);
  CHECK(policy.logits(kRoot)[0] == doctest::Approx(before[0] + 0.1).epsilon(1e-15));
  CHECK(policy.logits(kRoot)[1] == before[1]);
  CHECK(policy.version() == v0 + 2);

  GradientTable bad;
  bad.entries.emplace(kRoot, std::vector<double>{std::nan(""), 0, 0});
  CHECK_THROWS_WITH_AS(policy.apply_gradient(bad, 0.1),
                       doctest::Contains("(prompt 0, prefix [])"), NumericError);

  GradientTable missing;
  missing.entries.emplace(StateId{9, {1}}, std::vector<double>{0, 0, 0});
  CHECK_THROWS_AS(policy.apply_gradient(missing, 0.1), MissingStateError);

  CHECK_THROWS_AS(policy.apply_gradient(zero, 0.0), DomainError);
}

TEST_CASE("lazy materialization starts uniform") {
  PolicyTable policy(4);
  const StateId s{2, {1, 3}};
  CHECK(!policy.has_state(s));
  CHECK(policy.probs_or_uniform(s)[0] == doctest::Approx(0.25));
  CHECK(!policy.has_state(s));  // probs_or_uniform does not materialize
  CHECK(policy.ensure_state(s));
  CHECK(!policy.ensure_state(s));
  CHECK(policy.log_prob(s, 0) == doctest::Approx(std::log(0.25)).epsilon(1e-12));
}

TEST_CASE("snapshot round-trips through the flat text format") {
  PolicyTable policy(3);
  policy.set_logits(StateId{0, {}}, {0.25, -1.5, 2.0});
  policy.set_logits(StateId{1, {2, 0}}, {0.125, 0.0, -0.75});
  policy.set_logits(StateId{1, {2}}, {-0.5, 0.25, 0.0});

  const std::string text = policy.save_string();
  const PolicyTable loaded = PolicyTable::load_string(text, 3);
  CHECK(loaded.save_string() == text);
  CHECK(loaded.num_states() == 3);
  CHECK(loaded.logits(StateId{1, {2, 0}})[2] == -0.75);

  CHECK_THROWS_AS(PolicyTable::load_string("0;;1,2\n", 3), DomainError);
  CHECK_THROWS_AS(PolicyTable::load_string("junk\n", 3), DomainError);
}

TEST_CASE("seeded runs produce bitwise-identical tables") {
  const auto run_once = [] {
    PolicyTable policy(4);
    RngStream rng(33);
    for (int step = 0; step < 50; ++step) {
      const StateId s{0, {step % 3}};
      policy.ensure_state(s);
      GradientTable grad;
      std::vector<double> g(4);
      for (double& v : g) v = rng.next_normal();
      grad.entries.emplace(s, g);
      policy.apply_gradient(grad, 0.05);
    }
    return policy.save_string();
  };
  CHECK(run_once() == run_once());
}
