#pragma once

#include <span>
#include <vector>

#include "bapolab/env.hpp"
#include "bapolab/objective.hpp"
#include "bapolab/policy.hpp"
#include "bapolab/rng.hpp"

namespace bapolab::theory {

// Exact per-token action values at one state, by exhaustive enumeration of
// all continuations under the policy. Satisfies sum_y pi(y) * advantage(y) = 0
// up to rounding, which is what makes the logit-delta identity exact.
struct ExactValueTable {
  std::vector<double> q;          // Q(y): expected terminal reward taking y then following pi
  double v = 0.0;                 // E_{y~pi} Q(y)
  std::vector<double> advantage;  // Q(y) - v
};

// Enumeration is refused when V^(horizon - prefix length) exceeds 10^6.
ExactValueTable exact_advantages(const PolicyTable& policy, const EnvSpec& spec, const StateId& state);

// Per-vocabulary-token outcome of one update at one state: its advantage and
// whether its gradient survived clipping. Tokens absent from the list were
// never sampled and enter the entropy rule with A*X = 0.
struct TokenOutcome {
  int token = 0;
  double advantage = 0.0;
  bool retained = true;
};

// First-order entropy prediction for one state:
//   delta H ~= -eta * Cov_{y~pi}(log pi(y), A(y) * X(y))
// with the covariance over the full vocabulary. constant_c reports the
// clipped-token correction sum from the logit-delta identity; being constant
// across tokens it contributes nothing to the covariance.
struct EntropyPrediction {
  double predicted_delta = 0.0;
  double covariance = 0.0;
  double constant_c = 0.0;
};

EntropyPrediction predict_entropy_delta(const PolicyTable& policy, const StateId& state,
                                        std::span<const TokenOutcome> outcomes, double learning_rate);

// The update the entropy rule models: logit(y) += eta * A(y) * X(y). (The
// additive constant from the identity shifts all logits equally and cannot
// move any probability, so it is omitted.)
GradientTable entropy_rule_update(const PolicyTable& policy, const StateId& state,
                                  std::span<const TokenOutcome> outcomes);

// Applies entropy_rule_update to a copy of the policy and returns the exact
// entropy change, for comparing against predict_entropy_delta.
double measured_entropy_delta(const PolicyTable& policy, const StateId& state,
                              std::span<const TokenOutcome> outcomes, double learning_rate);

// Checks the per-logit update identity on the real objective/update path:
// builds a one-record-per-token batch against a uniform behavior snapshot,
// runs batch_gradient + apply_gradient, and compares each logit delta with
//   eta * pi(y) * (A(y) * X(y) + C),  C = sum over clipped tokens of pi * A.
// Advantages are re-centered under the current policy first (the identity
// assumes the advantage expectation vanishes, as it does for exact
// advantages).
struct Prop1Report {
  double max_abs_deviation = 0.0;
  int clipped_tokens = 0;
  int retained_tokens = 0;
  double constant_c = 0.0;
};

Prop1Report verify_logit_delta_identity(const PolicyTable& policy, const StateId& state,
                                        std::span<const double> advantages, const ClipBounds& bounds,
                                        double learning_rate);

enum class Level { low, high };
enum class EntropySign { decrease, increase };

// Token-characteristic classification:
//   high probability: log pi(y) strictly above E_{y~pi}[log pi]
//   high advantage:   A(y) strictly above sum over retained tokens of pi * A
// and the predicted entropy effect of updating on that token:
//   same class on both axes -> decrease, mixed -> increase.
struct TokenClass {
  Level prob_class = Level::low;
  Level adv_class = Level::low;
  EntropySign predicted_entropy_sign = EntropySign::decrease;
};

TokenClass classify_token(const PolicyTable& policy, const StateId& state, int token, double advantage,
                          std::span<const TokenOutcome> outcomes);

// Random single-state instances: every retained, non-boundary token's
// entropy contribution -eta * pi*(log pi - E log pi) * (A - E_retained A)
// must carry the sign its classification predicts.
struct SignTableReport {
  int checked = 0;
  int violations = 0;
  int boundary_skipped = 0;
};

SignTableReport verify_sign_table(int trials, RngStream rng);

}  // namespace bapolab::theory
