#pragma once

#include <string>
#include <vector>

#include "bapolab/objective.hpp"
#include "bapolab/policy.hpp"
#include "bapolab/rollout.hpp"

namespace bapolab {

// Movable clipping ranges and target positive contribution for the bound
// search. Defaults follow the reference hyperparameters: rho0 = 0.4,
// c_low in [0.6, 0.9] by 0.02, c_high in [1.2, 3.0] by 0.05.
struct BapoConfig {
  double rho0 = 0.4;
  double a_minus = 0.6;
  double b_minus = 0.9;
  double a_plus = 1.2;
  double b_plus = 3.0;
  double delta1 = 0.05;  // c_high step
  double delta2 = 0.02;  // c_low step

  void validate() const;
  bool operator==(const BapoConfig&) const = default;
};

enum class SearchOutcome { target_met, range_exhausted };

std::string to_string(SearchOutcome outcome);

struct BoundSearchStep {
  double c_low = 0.0;
  double c_high = 0.0;
  double rho = 0.0;
};

struct BoundSearchTrace {
  std::vector<BoundSearchStep> steps;  // every candidate visited, in order
  SearchOutcome outcome = SearchOutcome::target_met;

  const BoundSearchStep& final() const { return steps.back(); }
};

// Upper bound on the number of candidates the search can visit.
int search_iteration_bound(const BapoConfig& cfg);

// The bound search: starting from (a_minus, a_plus), raise c_high by delta1
// while it fits in [a_plus, b_plus], then c_low by delta2, until the
// positive contribution rho of the frozen batch reaches rho0 or the ranges
// are exhausted. rho is re-evaluated against the same batch and policy for
// every candidate; nothing is updated during the search.
std::pair<ClipBounds, BoundSearchTrace> adapt_bounds(const RolloutBatch& batch,
                                                     const PolicyTable& policy,
                                                     const BapoConfig& cfg,
                                                     const ObjectiveOptions& options = {});

// One BAPO update: adapt bounds, then a single gradient-ascent step of the
// clipped surrogate at the chosen bounds.
struct BapoUpdateResult {
  ClipBounds bounds;
  BoundSearchTrace trace;
  LossBreakdown breakdown;
  double grad_norm = 0.0;
};

BapoUpdateResult bapo_update(PolicyTable& policy, const RolloutBatch& batch, const BapoConfig& cfg,
                             double learning_rate, const ObjectiveOptions& options = {});

// Trace rows as CSV: step,c_low,c_high,rho.
std::string trace_to_csv(const BoundSearchTrace& trace);

}  // namespace bapolab
