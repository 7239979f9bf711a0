#include "bapolab/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bapolab/error.hpp"

namespace bapolab {

std::string to_string(RatioWeighting w) { return w == RatioWeighting::eq8 ? "eq8" : "plain"; }
std::string to_string(LossAgg agg) { return agg == LossAgg::token_mean ? "token_mean" : "sum"; }

RatioWeighting ratio_weighting_from_string(const std::string& name) {
  if (name == "eq8") return RatioWeighting::eq8;
  if (name == "plain") return RatioWeighting::plain;
  throw DomainError(msg("unknown ratio_weighting '", name, "' (expected eq8 or plain)"));
}

LossAgg loss_agg_from_string(const std::string& name) {
  if (name == "token_mean") return LossAgg::token_mean;
  if (name == "sum") return LossAgg::sum;
  throw DomainError(msg("unknown loss_agg '", name, "' (expected token_mean or sum)"));
}

std::string to_string(RatioMass mass) { return mass == RatioMass::value ? "value" : "gradient"; }

RatioMass ratio_mass_from_string(const std::string& name) {
  if (name == "value") return RatioMass::value;
  if (name == "gradient") return RatioMass::gradient;
  throw DomainError(msg("unknown ratio_mass '", name, "' (expected value or gradient)"));
}

namespace {

void check_bounds(const ClipBounds& bounds) {
  if (!bounds.valid())
    throw DomainError(msg("invalid clip bounds (", bounds.c_low, ", ", bounds.c_high,
                          "): need 0 <= c_low < 1 < c_high"));
}

}  // namespace

double surrogate_term(double ratio, double advantage, const ClipBounds& bounds) {
  check_bounds(bounds);
  if (!(ratio > 0.0)) throw DomainError(msg("importance ratio must be > 0, got ", ratio));
  const double clipped = std::clamp(ratio, bounds.c_low, bounds.c_high);
  return std::min(ratio * advantage, clipped * advantage);
}

int clip_indicator(double ratio, double advantage, const ClipBounds& bounds) {
  check_bounds(bounds);
  if (!(ratio > 0.0)) throw DomainError(msg("importance ratio must be > 0, got ", ratio));
  if (advantage > 0.0) return ratio < bounds.c_high ? 1 : 0;
  if (advantage < 0.0) return ratio > bounds.c_low ? 1 : 0;
  return 0;
}

PreparedBatch prepare_batch(const PolicyTable& policy, const RolloutBatch& batch,
                            const ObjectiveOptions& options) {
  PreparedBatch prepared;
  prepared.record_count = batch.records.size();
  prepared.tokens.reserve(batch.records.size());
  for (const auto& rec : batch.records) {
    if (rec.behavior_version > policy.version())
      throw DomainError(msg("record at ", rec.state, " has behavior version ", rec.behavior_version,
                            " ahead of policy version ", policy.version()));
    if (!std::isfinite(rec.behavior_log_prob) || rec.behavior_log_prob > 0.0)
      throw NumericError(msg("bad behavior log-prob ", rec.behavior_log_prob, " for token ",
                             rec.token, " at ", rec.state));
    const double lp = policy.log_prob(rec.state, rec.token);
    const double ratio = std::exp(lp - rec.behavior_log_prob);
    if (!std::isfinite(ratio) || ratio <= 0.0)
      throw NumericError(msg("non-finite importance ratio for token ", rec.token, " at ", rec.state));
    PreparedBatch::Token t;
    t.ratio = ratio;
    t.advantage = rec.advantage;
    t.weight = options.ratio_weighting == RatioWeighting::eq8 ? std::exp(rec.behavior_log_prob) : 1.0;
    prepared.tokens.push_back(t);
  }
  return prepared;
}

LossBreakdown evaluate_breakdown(const PreparedBatch& prepared, const ClipBounds& bounds,
                                 const ObjectiveOptions& options) {
  check_bounds(bounds);
  LossBreakdown out;
  const ClipBounds positive_bounds{0.0, bounds.c_high};
  double objective = 0.0;
  int pos_tokens = 0, neg_tokens = 0, pos_clipped = 0, neg_clipped = 0;
  for (const auto& t : prepared.tokens) {
    const double term = surrogate_term(t.ratio, t.advantage, bounds);
    objective += term;
    if (t.advantage == 0.0) {
      ++out.zero_advantage_tokens;
      continue;
    }
    const int retained = clip_indicator(t.ratio, t.advantage, bounds);
    if (t.advantage > 0.0) {
      ++pos_tokens;
      if (retained == 0) ++pos_clipped;
      if (options.ratio_mass == RatioMass::value)
        out.positive_sum += t.weight * surrogate_term(t.ratio, t.advantage, positive_bounds);
      else if (retained == 1)
        out.positive_sum += t.weight * t.ratio * t.advantage;
    } else {
      ++neg_tokens;
      if (retained == 0) ++neg_clipped;
      if (options.ratio_mass == RatioMass::value)
        out.negative_sum += t.weight * term;
      else if (retained == 1)
        out.negative_sum += t.weight * t.ratio * t.advantage;
    }
  }
  out.total = objective;
  if (options.loss_agg == LossAgg::token_mean && !prepared.tokens.empty())
    out.total /= static_cast<double>(prepared.tokens.size());
  const double numer = std::abs(out.positive_sum);
  const double denom = options.ratio_mass == RatioMass::value
                           ? std::abs(out.positive_sum + out.negative_sum)
                           : std::abs(out.positive_sum) + std::abs(out.negative_sum);
  if (denom > 0.0)
    out.pos_ratio = numer / denom;
  else
    out.pos_ratio = numer > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
  out.clip_fraction_pos = pos_tokens > 0 ? static_cast<double>(pos_clipped) / pos_tokens : 0.0;
  out.clip_fraction_neg = neg_tokens > 0 ? static_cast<double>(neg_clipped) / neg_tokens : 0.0;
  return out;
}

double batch_objective(const PolicyTable& policy, const RolloutBatch& batch, const ClipBounds& bounds,
                       const ObjectiveOptions& options) {
  return evaluate_breakdown(prepare_batch(policy, batch, options), bounds, options).total;
}

std::pair<GradientTable, LossBreakdown> batch_gradient(const PolicyTable& policy,
                                                       const RolloutBatch& batch,
                                                       const ClipBounds& bounds,
                                                       const ObjectiveOptions& options) {
  const PreparedBatch prepared = prepare_batch(policy, batch, options);
  const LossBreakdown breakdown = evaluate_breakdown(prepared, bounds, options);

  GradientTable grad;
  const double scale = options.loss_agg == LossAgg::token_mean && !prepared.tokens.empty()
                           ? 1.0 / static_cast<double>(prepared.tokens.size())
                           : 1.0;
  for (std::size_t i = 0; i < batch.records.size(); ++i) {
    const auto& rec = batch.records[i];
    const auto& t = prepared.tokens[i];
    if (clip_indicator(t.ratio, t.advantage, bounds) == 0) continue;
    // d/dz of r*A at this state: A * r * (1{y} - pi).
    const double coeff = scale * t.advantage * t.ratio;
    auto [it, inserted] =
        grad.entries.try_emplace(rec.state, std::vector<double>(policy.vocab_size(), 0.0));
    auto& g = it->second;
    const auto p = policy.probs(rec.state);
    for (int y = 0; y < policy.vocab_size(); ++y) g[y] -= coeff * p[static_cast<std::size_t>(y)];
    g[static_cast<std::size_t>(rec.token)] += coeff;
  }
  return {std::move(grad), breakdown};
}

double contribution_ratio(const RolloutBatch& batch, const PolicyTable& policy,
                          const ClipBounds& bounds, const ObjectiveOptions& options) {
  if (batch.records.empty()) throw DomainError("contribution_ratio: empty batch");
  return evaluate_breakdown(prepare_batch(policy, batch, options), bounds, options).pos_ratio;
}

}  // namespace bapolab
