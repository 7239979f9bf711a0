#include "bapolab/policy.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "bapolab/error.hpp"

namespace bapolab {

namespace {

// Re-centering threshold. Training-scale logits never get near this, so the
// apply_gradient contract "logits[s] += lr * grad[s]" holds verbatim; only a
// run that drifts absurdly far gets shifted back (probabilities unchanged).
constexpr double kLogitDriftLimit = 1e3;

}  // namespace

std::string to_string(const StateId& s) {
  std::ostringstream os;
  os << s;
  return os.str();
}

std::ostream& operator<<(std::ostream& os, const StateId& s) {
  os << "(prompt " << s.prompt_id << ", prefix [";
  for (std::size_t i = 0; i < s.prefix.size(); ++i) {
    if (i) os << ' ';
    os << s.prefix[i];
  }
  return os << "])";
}

double GradientTable::l2_norm() const {
  double sq = 0.0;
  for (const auto& [state, vec] : entries) {
    for (double g : vec) sq += g * g;
  }
  return std::sqrt(sq);
}

double log_sum_exp(std::span<const double> values) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : values) m = std::max(m, v);
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - m);
  return m + std::log(acc);
}

PolicyTable::PolicyTable(int vocab_size) : vocab_size_(vocab_size) {
  if (vocab_size < 2) throw DomainError(msg("vocab_size must be >= 2, got ", vocab_size));
}

bool PolicyTable::ensure_state(const StateId& s) {
  auto [it, inserted] = logits_.try_emplace(s, std::vector<double>(vocab_size_, 0.0));
  return inserted;
}

const std::vector<double>& PolicyTable::logits_checked(const StateId& s) const {
  auto it = logits_.find(s);
  if (it == logits_.end()) throw MissingStateError(msg("state not in policy table: ", s));
  return it->second;
}

const std::vector<double>& PolicyTable::logits(const StateId& s) const {
  return logits_checked(s);
}

void PolicyTable::set_logits(const StateId& s, std::vector<double> values) {
  if (static_cast<int>(values.size()) != vocab_size_)
    throw DomainError(msg("logit vector for ", s, " has size ", values.size(), ", expected ", vocab_size_));
  for (double v : values)
    if (!std::isfinite(v)) throw NumericError(msg("non-finite logit for ", s));
  logits_[s] = std::move(values);
  ++version_;
}

void PolicyTable::check_token(int token) const {
  if (token < 0 || token >= vocab_size_)
    throw DomainError(msg("token ", token, " out of range [0, ", vocab_size_, ")"));
}

double PolicyTable::log_prob(const StateId& s, int token) const {
  check_token(token);
  const auto& z = logits_checked(s);
  return z[token] - log_sum_exp(z);
}

std::vector<double> PolicyTable::log_probs(const StateId& s) const {
  const auto& z = logits_checked(s);
  const double lse = log_sum_exp(z);
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - lse;
  return out;
}

std::vector<double> PolicyTable::probs(const StateId& s) const {
  auto lp = log_probs(s);
  for (double& v : lp) v = std::exp(v);
  return lp;
}

std::vector<double> PolicyTable::probs_or_uniform(const StateId& s) const {
  if (!has_state(s)) return std::vector<double>(vocab_size_, 1.0 / vocab_size_);
  return probs(s);
}

double PolicyTable::state_entropy(const StateId& s) const {
  const auto lp = log_probs(s);
  double h = 0.0;
  for (double l : lp) {
    const double p = std::exp(l);
    if (p > 0.0) h -= p * l;
  }
  return h;
}

std::vector<double> PolicyTable::log_prob_gradient(const StateId& s, int token) const {
  check_token(token);
  auto g = probs(s);
  for (double& v : g) v = -v;
  g[token] += 1.0;
  return g;
}

int PolicyTable::sample_token(const StateId& s, RngStream& rng) const {
  const auto p = probs(s);
  const double u = rng.next_double();
  double cum = 0.0;
  for (int y = 0; y < vocab_size_; ++y) {
    cum += p[y];
    if (u < cum) return y;
  }
  return vocab_size_ - 1;
}

void PolicyTable::apply_gradient(const GradientTable& grad, double learning_rate) {
  if (!(learning_rate > 0.0)) throw DomainError(msg("learning_rate must be > 0, got ", learning_rate));
  // Validate before mutating anything.
  for (const auto& [state, vec] : grad.entries) {
    auto it = logits_.find(state);
    if (it == logits_.end())
      throw MissingStateError(msg("gradient touches state missing from policy: ", state));
    if (static_cast<int>(vec.size()) != vocab_size_)
      throw DomainError(msg("gradient vector for ", state, " has size ", vec.size()));
    for (double g : vec)
      if (!std::isfinite(g)) throw NumericError(msg("non-finite gradient entry at ", state));
  }
  for (const auto& [state, vec] : grad.entries) {
    auto& z = logits_[state];
    for (int y = 0; y < vocab_size_; ++y) z[y] += learning_rate * vec[y];
    double amax = 0.0;
    for (double v : z) amax = std::max(amax, std::abs(v));
    if (amax > kLogitDriftLimit) {
      const double m = *std::max_element(z.begin(), z.end());
      for (double& v : z) v -= m;
    }
  }
  ++version_;
}

void PolicyTable::save(std::ostream& os) const {
  os.precision(17);
  for (const auto& [state, z] : logits_) {
    os << state.prompt_id << ';';
    for (std::size_t i = 0; i < state.prefix.size(); ++i) {
      if (i) os << ',';
      os << state.prefix[i];
    }
    os << ';';
    for (int y = 0; y < vocab_size_; ++y) {
      if (y) os << ',';
      os << z[y];
    }
    os << '\n';
  }
}

std::string PolicyTable::save_string() const {
  std::ostringstream os;
  save(os);
  return os.str();
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

PolicyTable PolicyTable::load(std::istream& is, int vocab_size) {
  PolicyTable table(vocab_size);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split(line, ';');
    if (fields.size() != 3)
      throw DomainError(msg("policy snapshot line ", lineno, ": expected 3 ';'-fields"));
    StateId s;
    try {
      s.prompt_id = std::stoi(fields[0]);
      if (!fields[1].empty())
        for (const auto& tok : split(fields[1], ',')) s.prefix.push_back(std::stoi(tok));
      std::vector<double> z;
      for (const auto& v : split(fields[2], ',')) z.push_back(std::stod(v));
      table.set_logits(s, std::move(z));
    } catch (const std::logic_error& e) {
      throw DomainError(msg("policy snapshot line ", lineno, ": ", e.what()));
    }
  }
  table.version_ = 0;
  return table;
}

PolicyTable PolicyTable::load_string(const std::string& text, int vocab_size) {
  std::istringstream is(text);
  return load(is, vocab_size);
}

}  // namespace bapolab
