#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace bapolab {

// Invalid argument values (token out of range, bad bounds, bad config field).
struct DomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Lookup of a state the policy has never materialized.
struct MissingStateError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

// Non-finite intermediate (gradient entry, importance ratio, ...).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {
inline void msg_append(std::ostringstream&) {}
template <class T, class... Rest>
void msg_append(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  msg_append(os, rest...);
}
}  // namespace detail

template <class... Parts>
std::string msg(const Parts&... parts) {
  std::ostringstream os;
  detail::msg_append(os, parts...);
  return os.str();
}

}  // namespace bapolab
