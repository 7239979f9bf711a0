#include "bapolab/bapo.hpp"

#include <cmath>
#include <sstream>

#include "bapolab/error.hpp"

namespace bapolab {

namespace {

// Boundary comparisons tolerate one ulp-scale slop so that ranges whose ends
// are exact multiples of the step (0.6 + 15 * 0.02 = 0.9) keep their full
// length under floating-point stepping.
constexpr double kStepTol = 1e-9;

}  // namespace

void BapoConfig::validate() const {
  if (!(rho0 > 0.0 && rho0 < 1.0)) throw DomainError(msg("rho0 must be in (0, 1), got ", rho0));
  if (!(0.0 <= a_minus && a_minus <= b_minus && b_minus < 1.0))
    throw DomainError(msg("clip_low_range [", a_minus, ", ", b_minus, "] must satisfy 0 <= a- <= b- < 1"));
  if (!(1.0 < a_plus && a_plus <= b_plus))
    throw DomainError(msg("clip_high_range [", a_plus, ", ", b_plus, "] must satisfy 1 < a+ <= b+"));
  if (!(delta1 > 0.0)) throw DomainError(msg("delta1 must be > 0, got ", delta1));
  if (!(delta2 > 0.0)) throw DomainError(msg("delta2 must be > 0, got ", delta2));
}

std::string to_string(SearchOutcome outcome) {
  return outcome == SearchOutcome::target_met ? "target_met" : "range_exhausted";
}

int search_iteration_bound(const BapoConfig& cfg) {
  const auto steps = [](double lo, double hi, double delta) {
    return static_cast<int>(std::ceil((hi - lo) / delta - kStepTol));
  };
  return steps(cfg.a_plus, cfg.b_plus, cfg.delta1) + steps(cfg.a_minus, cfg.b_minus, cfg.delta2) + 1;
}

std::pair<ClipBounds, BoundSearchTrace> adapt_bounds(const RolloutBatch& batch,
                                                     const PolicyTable& policy,
                                                     const BapoConfig& cfg,
                                                     const ObjectiveOptions& options) {
  cfg.validate();
  if (batch.records.empty()) throw DomainError("adapt_bounds: empty batch");

  const PreparedBatch prepared = prepare_batch(policy, batch, options);

  // Bounds are derived from integer step counts, not repeated addition, so
  // accumulation error cannot change the trace length.
  int k_high = 0;
  int k_low = 0;
  const auto c_high_at = [&](int k) { return cfg.a_plus + k * cfg.delta1; };
  const auto c_low_at = [&](int k) { return cfg.a_minus + k * cfg.delta2; };

  BoundSearchTrace trace;
  const auto evaluate = [&]() {
    const ClipBounds bounds{c_low_at(k_low), c_high_at(k_high)};
    const double rho = evaluate_breakdown(prepared, bounds, options).pos_ratio;
    trace.steps.push_back({bounds.c_low, bounds.c_high, rho});
    return rho;
  };

  double rho = evaluate();
  while (rho < cfg.rho0 && c_low_at(k_low) + cfg.delta2 <= cfg.b_minus + kStepTol) {
    if (c_high_at(k_high) + cfg.delta1 <= cfg.b_plus + kStepTol)
      ++k_high;
    else
      ++k_low;
    rho = evaluate();
  }
  trace.outcome = rho >= cfg.rho0 ? SearchOutcome::target_met : SearchOutcome::range_exhausted;
  return {ClipBounds{c_low_at(k_low), c_high_at(k_high)}, std::move(trace)};
}

BapoUpdateResult bapo_update(PolicyTable& policy, const RolloutBatch& batch, const BapoConfig& cfg,
                             double learning_rate, const ObjectiveOptions& options) {
  BapoUpdateResult result;
  auto [bounds, trace] = adapt_bounds(batch, policy, cfg, options);
  result.bounds = bounds;
  result.trace = std::move(trace);
  auto [grad, breakdown] = batch_gradient(policy, batch, bounds, options);
  result.breakdown = breakdown;
  result.grad_norm = grad.l2_norm();
  policy.apply_gradient(grad, learning_rate);
  return result;
}

std::string trace_to_csv(const BoundSearchTrace& trace) {
  std::ostringstream os;
  os.precision(17);
  os << "step,c_low,c_high,rho\n";
  for (std::size_t i = 0; i < trace.steps.size(); ++i)
    os << i << ',' << trace.steps[i].c_low << ',' << trace.steps[i].c_high << ','
       << trace.steps[i].rho << '\n';
  return os.str();
}

}  // namespace bapolab
