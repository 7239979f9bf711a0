#include "bapolab/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "bapolab/error.hpp"
#include "bapolab/metrics.hpp"

namespace bapolab {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

ConfigDoc ConfigDoc::parse(const std::string& text, const std::string& origin) {
  ConfigDoc doc;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw DomainError(msg(origin, ":", lineno, ": malformed section header '", t, "'"));
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) throw DomainError(msg(origin, ":", lineno, ": empty section name"));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw DomainError(msg(origin, ":", lineno, ": expected 'key = value', got '", t, "'"));
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw DomainError(msg(origin, ":", lineno, ": empty key"));
    if (section.empty())
      throw DomainError(msg(origin, ":", lineno, ": key '", key, "' appears before any [section]"));
    doc.values[section + "." + key] = value;
  }
  return doc;
}

ConfigDoc ConfigDoc::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError(msg("cannot open config file ", path));
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path);
}

std::string ConfigDoc::serialize() const {
  // std::map keeps "section.key" sorted, so sections come out grouped.
  std::string current_section;
  std::ostringstream os;
  for (const auto& [dotted, value] : values) {
    const auto dot = dotted.find('.');
    const std::string section = dotted.substr(0, dot);
    const std::string key = dotted.substr(dot + 1);
    if (section != current_section) {
      if (!current_section.empty()) os << '\n';
      os << '[' << section << "]\n";
      current_section = section;
    }
    os << key << " = " << value << '\n';
  }
  return os.str();
}

std::uint64_t ConfigDoc::digest() const {
  // FNV-1a over the canonical serialization; stable across platforms.
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : serialize()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string ConfigDoc::digest_hex() const {
  static const char* hex = "0123456789abcdef";
  std::uint64_t d = digest();
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = hex[d & 0xf];
    d >>= 4;
  }
  return out;
}

void ConfigDoc::set(const std::string& dotted_key, const std::string& value) {
  if (dotted_key.find('.') == std::string::npos)
    throw DomainError(msg("config key '", dotted_key, "' must be section.key"));
  values[dotted_key] = value;
}

std::string format_bounds(double lo, double hi) {
  return msg("[", format_double(lo), ", ", format_double(hi), "]");
}

namespace {

class Resolver {
 public:
  explicit Resolver(const ConfigDoc& doc) : doc_(doc) {}

  double number(const std::string& key, double fallback) {
    const std::string* raw = fetch(key);
    if (!raw) return fallback;
    try {
      std::size_t pos = 0;
      const double v = std::stod(*raw, &pos);
      if (pos != raw->size()) throw std::invalid_argument(*raw);
      return v;
    } catch (const std::logic_error&) {
      throw DomainError(msg(key, ": not a number: '", *raw, "'"));
    }
  }

  int integer(const std::string& key, int fallback) {
    const std::string* raw = fetch(key);
    if (!raw) return fallback;
    try {
      std::size_t pos = 0;
      const long v = std::stol(*raw, &pos);
      if (pos != raw->size()) throw std::invalid_argument(*raw);
      return static_cast<int>(v);
    } catch (const std::logic_error&) {
      throw DomainError(msg(key, ": not an integer: '", *raw, "'"));
    }
  }

  std::uint64_t unsigned64(const std::string& key, std::uint64_t fallback) {
    const std::string* raw = fetch(key);
    if (!raw) return fallback;
    try {
      std::size_t pos = 0;
      const unsigned long long v = std::stoull(*raw, &pos);
      if (pos != raw->size()) throw std::invalid_argument(*raw);
      return v;
    } catch (const std::logic_error&) {
      throw DomainError(msg(key, ": not a non-negative integer: '", *raw, "'"));
    }
  }

  bool boolean(const std::string& key, bool fallback) {
    const std::string* raw = fetch(key);
    if (!raw) return fallback;
    if (*raw == "true" || *raw == "1") return true;
    if (*raw == "false" || *raw == "0") return false;
    throw DomainError(msg(key, ": not a boolean: '", *raw, "'"));
  }

  std::string text(const std::string& key, const std::string& fallback) {
    const std::string* raw = fetch(key);
    return raw ? *raw : fallback;
  }

  std::pair<double, double> pair(const std::string& key, std::pair<double, double> fallback) {
    const std::string* raw = fetch(key);
    if (!raw) return fallback;
    std::string body = trim(*raw);
    if (!body.empty() && body.front() == '[' && body.back() == ']')
      body = trim(body.substr(1, body.size() - 2));
    const auto comma = body.find(',');
    if (comma == std::string::npos)
      throw DomainError(msg(key, ": expected two comma-separated numbers, got '", *raw, "'"));
    try {
      return {std::stod(trim(body.substr(0, comma))), std::stod(trim(body.substr(comma + 1)))};
    } catch (const std::logic_error&) {
      throw DomainError(msg(key, ": expected two numbers, got '", *raw, "'"));
    }
  }

  // Any key not consumed by the schema is a typo worth rejecting.
  void reject_unknown() const {
    for (const auto& [key, value] : doc_.values)
      if (!consumed_.count(key)) throw DomainError(msg(key, ": unknown config key"));
  }

 private:
  const std::string* fetch(const std::string& key) {
    consumed_.insert(key);
    auto it = doc_.values.find(key);
    return it == doc_.values.end() ? nullptr : &it->second;
  }

  const ConfigDoc& doc_;
  std::set<std::string> consumed_;
};

}  // namespace

TrainerConfig resolve_config(const ConfigDoc& doc) {
  Resolver r(doc);
  TrainerConfig cfg;

  const int num_prompts = r.integer("env.num_prompts", 8);
  const int vocab_size = r.integer("env.vocab_size", 4);
  const int horizon = r.integer("env.horizon", 4);
  const std::string mode_name = r.text("env.reward_mode", "parity");
  const std::uint64_t env_seed = r.unsigned64("env.seed", 0);
  RewardMode mode;
  try {
    mode = reward_mode_from_string(mode_name);
  } catch (const DomainError& e) {
    throw DomainError(msg("env.reward_mode: ", e.what()));
  }
  try {
    cfg.env = EnvSpec::make(num_prompts, vocab_size, horizon, mode, env_seed);
  } catch (const DomainError& e) {
    throw DomainError(msg("env: ", e.what()));
  }

  cfg.group_size = r.integer("rollout.group_size", cfg.group_size);
  cfg.staleness_epochs = r.integer("rollout.staleness_epochs", cfg.staleness_epochs);
  cfg.partial_rollout_budget =
      r.integer("rollout.partial_rollout_budget", cfg.partial_rollout_budget);
  cfg.grpo_std_normalize = r.boolean("rollout.grpo_std_normalize", cfg.grpo_std_normalize);

  try {
    cfg.objective.ratio_weighting =
        ratio_weighting_from_string(r.text("objective.ratio_weighting", "eq8"));
  } catch (const DomainError& e) {
    throw DomainError(msg("objective.ratio_weighting: ", e.what()));
  }
  try {
    cfg.objective.loss_agg = loss_agg_from_string(r.text("objective.loss_agg", "token_mean"));
  } catch (const DomainError& e) {
    throw DomainError(msg("objective.loss_agg: ", e.what()));
  }
  try {
    cfg.objective.ratio_mass = ratio_mass_from_string(r.text("objective.ratio_mass", "value"));
  } catch (const DomainError& e) {
    throw DomainError(msg("objective.ratio_mass: ", e.what()));
  }

  cfg.bapo.rho0 = r.number("bapo.rho0", cfg.bapo.rho0);
  const auto low_range = r.pair("bapo.clip_low_range", {cfg.bapo.a_minus, cfg.bapo.b_minus});
  const auto high_range = r.pair("bapo.clip_high_range", {cfg.bapo.a_plus, cfg.bapo.b_plus});
  cfg.bapo.a_minus = low_range.first;
  cfg.bapo.b_minus = low_range.second;
  cfg.bapo.a_plus = high_range.first;
  cfg.bapo.b_plus = high_range.second;
  cfg.bapo.delta1 = r.number("bapo.delta1", cfg.bapo.delta1);
  cfg.bapo.delta2 = r.number("bapo.delta2", cfg.bapo.delta2);

  try {
    cfg.algorithm = algorithm_from_string(r.text("trainer.algorithm", "grpo_fixed"));
  } catch (const DomainError& e) {
    throw DomainError(msg("trainer.algorithm: ", e.what()));
  }
  cfg.steps = r.integer("trainer.steps", cfg.steps);
  cfg.learning_rate = r.number("trainer.learning_rate", cfg.learning_rate);
  cfg.prompts_per_batch = r.integer("trainer.prompts_per_batch", cfg.prompts_per_batch);
  cfg.seed = r.unsigned64("trainer.seed", cfg.seed);
  const auto bounds = r.pair("trainer.fixed_bounds", {cfg.fixed_bounds.c_low, cfg.fixed_bounds.c_high});
  cfg.fixed_bounds = ClipBounds{bounds.first, bounds.second};

  r.reject_unknown();
  cfg.validate();
  return cfg;
}

ConfigDoc to_doc(const TrainerConfig& config) {
  ConfigDoc doc;
  doc.set("env.num_prompts", std::to_string(config.env.num_prompts));
  doc.set("env.vocab_size", std::to_string(config.env.vocab_size));
  doc.set("env.horizon", std::to_string(config.env.horizon));
  doc.set("env.reward_mode", to_string(config.env.reward_mode));
  doc.set("env.seed", std::to_string(config.env.target_seed));
  doc.set("rollout.group_size", std::to_string(config.group_size));
  doc.set("rollout.staleness_epochs", std::to_string(config.staleness_epochs));
  doc.set("rollout.partial_rollout_budget", std::to_string(config.partial_rollout_budget));
  doc.set("rollout.grpo_std_normalize", config.grpo_std_normalize ? "true" : "false");
  doc.set("objective.ratio_weighting", to_string(config.objective.ratio_weighting));
  doc.set("objective.loss_agg", to_string(config.objective.loss_agg));
  doc.set("objective.ratio_mass", to_string(config.objective.ratio_mass));
  doc.set("bapo.rho0", format_double(config.bapo.rho0));
  doc.set("bapo.clip_low_range", format_bounds(config.bapo.a_minus, config.bapo.b_minus));
  doc.set("bapo.clip_high_range", format_bounds(config.bapo.a_plus, config.bapo.b_plus));
  doc.set("bapo.delta1", format_double(config.bapo.delta1));
  doc.set("bapo.delta2", format_double(config.bapo.delta2));
  doc.set("trainer.algorithm", to_string(config.algorithm));
  doc.set("trainer.steps", std::to_string(config.steps));
  doc.set("trainer.learning_rate", format_double(config.learning_rate));
  doc.set("trainer.prompts_per_batch", std::to_string(config.prompts_per_batch));
  doc.set("trainer.seed", std::to_string(config.seed));
  doc.set("trainer.fixed_bounds", format_bounds(config.fixed_bounds.c_low, config.fixed_bounds.c_high));
  return doc;
}

}  // namespace bapolab
