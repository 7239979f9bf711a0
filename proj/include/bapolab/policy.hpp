#pragma once

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bapolab/rng.hpp"

namespace bapolab {

// Conditioning context of one autoregressive decision: which prompt we are
// answering and the tokens generated so far.
struct StateId {
  int prompt_id = 0;
  std::vector<int> prefix;

  auto operator<=>(const StateId&) const = default;
  bool operator==(const StateId&) const = default;
};

std::string to_string(const StateId& s);
std::ostream& operator<<(std::ostream& os, const StateId& s);

// Per-logit partials of an objective, indexed like the policy table.
struct GradientTable {
  std::map<StateId, std::vector<double>> entries;

  // Deterministic (sorted-key) accumulation.
  double l2_norm() const;
  bool empty() const { return entries.empty(); }
};

// Exact softmax policy over a lazily materialized table of logit vectors.
// A state that was never visited is logically all-zeros (uniform); visiting
// it stores the zero vector so later updates have somewhere to land.
//
// Reads are safe to share between threads; ensure_state / apply_gradient /
// set_logits need exclusive access.
class PolicyTable {
 public:
  explicit PolicyTable(int vocab_size);

  int vocab_size() const { return vocab_size_; }
  std::uint64_t version() const { return version_; }
  std::size_t num_states() const { return logits_.size(); }
  bool has_state(const StateId& s) const { return logits_.count(s) != 0; }

  // Creates the state with zero logits if absent; returns whether it was new.
  bool ensure_state(const StateId& s);

  // Raw logits of a materialized state. Throws MissingStateError otherwise.
  const std::vector<double>& logits(const StateId& s) const;

  // Overwrites the logits of a state (materializing it), bumps the version.
  void set_logits(const StateId& s, std::vector<double> values);

  // log softmax(logits[s])[token]; always <= 0.
  double log_prob(const StateId& s, int token) const;

  // Full log-softmax / softmax vectors for a materialized state.
  std::vector<double> log_probs(const StateId& s) const;
  std::vector<double> probs(const StateId& s) const;

  // Softmax of the state's logical logits: uniform when not materialized.
  // Used by exact enumeration, which must see the lazy-zero semantics
  // without mutating the table.
  std::vector<double> probs_or_uniform(const StateId& s) const;

  // -sum p log p, in [0, ln(vocab_size)].
  double state_entropy(const StateId& s) const;

  // Gradient of log pi(token|s) with respect to the state's logits:
  // entry y = 1{y == token} - pi(y|s).
  std::vector<double> log_prob_gradient(const StateId& s, int token) const;

  // Draws one token from softmax(logits[s]) using the caller's stream.
  int sample_token(const StateId& s, RngStream& rng) const;

  // Gradient ascent: logits[s] += learning_rate * grad[s] for each entry.
  // Version is incremented exactly once per call. Rejects non-finite
  // gradient entries naming the offending state. States whose logits grow
  // past a drift limit are re-centered by subtracting the max logit, which
  // changes no probability.
  void apply_gradient(const GradientTable& grad, double learning_rate);

  // Flat text snapshot, one line per state: prompt_id;prefix_csv;logit_csv.
  // Lines are sorted by state so equal tables serialize identically.
  void save(std::ostream& os) const;
  std::string save_string() const;
  static PolicyTable load(std::istream& is, int vocab_size);
  static PolicyTable load_string(const std::string& text, int vocab_size);

  const std::map<StateId, std::vector<double>>& table() const { return logits_; }

 private:
  void check_token(int token) const;
  const std::vector<double>& logits_checked(const StateId& s) const;

  int vocab_size_;
  std::uint64_t version_ = 0;
  std::map<StateId, std::vector<double>> logits_;
};

// log(sumexp(values)) with max subtraction.
double log_sum_exp(std::span<const double> values);

}  // namespace bapolab
