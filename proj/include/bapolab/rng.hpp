#pragma once

#include <cmath>
#include <cstdint>

namespace bapolab {

// Counter-based splittable random stream. Every draw is a pure function of
// (key, counter), so child streams derived along a documented path
// (step -> prompt slot -> group member -> token position) are independent of
// evaluation order and of how much any sibling stream has consumed.
class RngStream {
 public:
  RngStream() = default;
  explicit RngStream(std::uint64_t key) : key_(key) {}

  // Child stream for index `i`. Derivation is stateless: it does not consume
  // from this stream.
  [[nodiscard]] RngStream derive(std::uint64_t i) const {
    return RngStream(mix(key_ ^ mix(i + 0x9e3779b97f4a7c15ull)));
  }

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * 0x9e3779b97f4a7c15ull); }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller (two draws per call, no cached spare so
  // the stream position stays a simple function of call count).
  double next_normal() {
    const double u1 = static_cast<double>((next_u64() >> 11) | 1ull) * 0x1.0p-53;
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  [[nodiscard]] std::uint64_t key() const { return key_; }
  [[nodiscard]] std::uint64_t counter() const { return counter_; }

  // SplitMix64 finalizer.
  static std::uint64_t mix(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace bapolab
