#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "bapolab/trainer.hpp"

namespace bapolab {

// Flat sectioned key-value config. Keys are addressed as "section.key" so a
// sweep can overwrite one of them programmatically. Serialization is
// canonical (sections and keys sorted), which makes the digest a stable
// identity for a resolved configuration.
struct ConfigDoc {
  std::map<std::string, std::string> values;

  static ConfigDoc parse(const std::string& text, const std::string& origin = "<config>");
  static ConfigDoc parse_file(const std::string& path);

  std::string serialize() const;
  std::uint64_t digest() const;
  std::string digest_hex() const;

  void set(const std::string& dotted_key, const std::string& value);
  bool has(const std::string& dotted_key) const { return values.count(dotted_key) != 0; }
};

// Applies the document onto defaults and validates. Unknown keys and bad
// values raise DomainError naming the offending "section.key".
TrainerConfig resolve_config(const ConfigDoc& doc);

// Full canonical document for a resolved config (every key explicit).
ConfigDoc to_doc(const TrainerConfig& config);

std::string format_bounds(double lo, double hi);

}  // namespace bapolab
