#pragma once

#include <string>
#include <vector>

#include "bapolab/policy.hpp"
#include "bapolab/rollout.hpp"

namespace bapolab {

struct ClipBounds {
  double c_low = 0.8;
  double c_high = 1.2;

  bool valid() const { return c_low >= 0.0 && c_low < 1.0 && c_high > 1.0; }
  bool operator==(const ClipBounds&) const = default;
};

enum class RatioWeighting {
  eq8,    // weight each token by its behavior-policy probability
  plain,  // unweighted token sums
};

enum class LossAgg {
  token_mean,  // objective and gradient divided by the batch token count
  sum,
};

// What "contribution of positive tokens" measures.
//
// value: the clipped-surrogate value sums as written, numerator over
// positive tokens with lower clip 0, denominator the net sum over all
// tokens. For group-standardized advantages on fixed-length trajectories
// the denominator is a near-cancelling difference, so this ratio saturates
// above any target and adaptive clipping rarely engages; it is kept as the
// literal formulation.
//
// gradient: only tokens whose gradient survives clipping count, and the
// denominator is |positive mass| + |negative mass|. Always in [0, 1],
// nondecreasing in c_high and in c_low, and responds to clipping, which is
// what the bound search exploits.
enum class RatioMass { value, gradient };

struct ObjectiveOptions {
  RatioWeighting ratio_weighting = RatioWeighting::eq8;
  LossAgg loss_agg = LossAgg::token_mean;
  RatioMass ratio_mass = RatioMass::value;

  bool operator==(const ObjectiveOptions&) const = default;
};

std::string to_string(RatioWeighting w);
std::string to_string(LossAgg agg);
std::string to_string(RatioMass mass);
RatioWeighting ratio_weighting_from_string(const std::string& name);
LossAgg loss_agg_from_string(const std::string& name);
RatioMass ratio_mass_from_string(const std::string& name);

// Positive/negative decomposition of one update's clipped-surrogate loss.
// Under RatioMass::value, positive_sum uses the lower clip 0 (positives are
// never down-clipped) and pos_ratio = |positive_sum| / |positive_sum +
// negative_sum|; under RatioMass::gradient the sums cover only retained
// tokens and pos_ratio = |positive_sum| / (|positive_sum| + |negative_sum|).
// The sums carry the behavior-probability weight when ratio_weighting ==
// eq8. Tokens with zero advantage are excluded from the sums and from both
// clip fractions, and counted in zero_advantage_tokens.
struct LossBreakdown {
  double positive_sum = 0.0;
  double negative_sum = 0.0;
  double total = 0.0;      // surrogate objective at the aggregation in force
  double pos_ratio = 1.0;  // 1 when both sums vanish: balance is vacuous
  double clip_fraction_pos = 0.0;
  double clip_fraction_neg = 0.0;
  int zero_advantage_tokens = 0;
};

// One term of the clipped surrogate: min(r*A, clip(r, c_low, c_high)*A).
double surrogate_term(double ratio, double advantage, const ClipBounds& bounds);

// 1 iff the token's gradient survives clipping:
// (A > 0 and r < c_high) or (A < 0 and r > c_low). Zero advantage gives 0.
int clip_indicator(double ratio, double advantage, const ClipBounds& bounds);

// Ratios and weights of a batch evaluated against one target policy; lets a
// bound search re-score many candidate bounds without touching the policy.
struct PreparedBatch {
  struct Token {
    double ratio = 1.0;
    double advantage = 0.0;
    double weight = 1.0;  // eq8: behavior probability, plain: 1
  };
  std::vector<Token> tokens;
  std::size_t record_count = 0;
};

PreparedBatch prepare_batch(const PolicyTable& policy, const RolloutBatch& batch,
                            const ObjectiveOptions& options = {});

LossBreakdown evaluate_breakdown(const PreparedBatch& prepared, const ClipBounds& bounds,
                                 const ObjectiveOptions& options = {});

// Scalar surrogate objective (for finite differencing and metrics).
double batch_objective(const PolicyTable& policy, const RolloutBatch& batch, const ClipBounds& bounds,
                       const ObjectiveOptions& options = {});

// Analytic gradient of batch_objective with respect to every touched logit.
// Clipped tokens (X = 0) contribute exactly nothing.
std::pair<GradientTable, LossBreakdown> batch_gradient(const PolicyTable& policy,
                                                       const RolloutBatch& batch,
                                                       const ClipBounds& bounds,
                                                       const ObjectiveOptions& options = {});

// Share of the clipped-surrogate loss magnitude attributable to positive
// tokens:
//   |sum over A>0 of w * min(r*A, clip(r, 0, c_high)*A)|
//   ------------------------------------------------------
//   |sum over all  of w * min(r*A, clip(r, c_low, c_high)*A)|
// Returns 1 when both sums are zero (the balance condition is vacuously
// satisfied) and +infinity when only the denominator vanishes.
double contribution_ratio(const RolloutBatch& batch, const PolicyTable& policy,
                          const ClipBounds& bounds, const ObjectiveOptions& options = {});

}  // namespace bapolab
