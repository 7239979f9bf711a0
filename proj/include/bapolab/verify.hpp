#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bapolab/objective.hpp"
#include "bapolab/policy.hpp"
#include "bapolab/rng.hpp"
#include "bapolab/rollout.hpp"

namespace bapolab::verify {

struct CheckResult {
  std::string name;
  bool passed = false;
  double worst = 0.0;      // worst observed error (or violation count)
  double tolerance = 0.0;  // what it was held against
  std::string detail;
  double seconds = 0.0;
};

struct VerifyOptions {
  int trials = 1000;   // sample count for the per-pair / per-instance checks
  int batches = 100;   // batches and instances for gradient / identity checks
  int envs = 20;       // random envs for the advantage-expectation check
  double tolerance_scale = 1.0;
  bool inject_gradient_fault = false;  // test hook: perturbs one analytic gradient entry
  std::uint64_t seed = 0x5eedULL;
};

// Named tolerance profiles: "default" (scale 1) and "strict" (scale 0.1 on
// the exact checks).
double tolerance_scale_for_profile(const std::string& profile);

std::vector<CheckResult> run_all_checks(const VerifyOptions& options);
bool all_passed(const std::vector<CheckResult>& results);
std::string results_table(const std::vector<CheckResult>& results);
std::string results_csv(const std::vector<CheckResult>& results);

// ------- building blocks, reused by the test suites -------

// A rollout-generated batch against a policy that has drifted since the
// snapshot, with bounds that leave a mix of clipped and unclipped tokens and
// keep every ratio clear of the clip kinks.
struct RandomBatch {
  PolicyTable policy;
  RolloutBatch batch;
  ClipBounds bounds;
};

RandomBatch make_random_batch(RngStream rng);

// max over touched logits of |fd - analytic| / max(||analytic||_inf, floor),
// with central differences of batch_objective at the given step. `fault`
// is added to one analytic gradient entry when nonzero.
double gradient_fd_rel_error(const PolicyTable& policy, const RolloutBatch& batch,
                             const ClipBounds& bounds, const ObjectiveOptions& options,
                             double step = 1e-5, double fault = 0.0);

// max abs error of the analytic log-prob gradient against central finite
// differences over `pairs` random (state, token) pairs.
double log_prob_gradient_fd_error(int pairs, RngStream rng, double step = 1e-6);

}  // namespace bapolab::verify
