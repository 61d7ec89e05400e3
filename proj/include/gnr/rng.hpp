#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace gnr {

/// Seeded random source. Draws never cache values between calls, so the
/// engine state alone fully determines every future draw.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);
  /// Independent stream derived from a base seed and a task id.
  Rng(std::uint64_t seed, std::uint64_t stream);

  double uniform();                     // [0, 1)
  double uniform(double lo, double hi);  // [lo, hi)
  double normal();
  std::size_t index(std::size_t n);  // uniform in [0, n)
  bool bernoulli(double p) { return uniform() < p; }
  std::uint64_t next_u64() { return engine_(); }

  std::string state() const;
  void set_state(const std::string& s);

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace gnr
