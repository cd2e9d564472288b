#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>

namespace sdefim {

/// Philox4x32-10 counter-based generator.
///
/// A stream is identified by a 64-bit key; the counter walks through the
/// stream. `split` derives an independent child key, so substreams can be
/// addressed directly by (seed, equation index, path index, ...) without any
/// shared state. Reproducibility therefore never depends on scheduling.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed);
  RandomStream(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

  RandomStream split(std::uint64_t id) const;
  std::uint64_t key() const noexcept { return key_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in the closed range [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal();
  bool bernoulli(double p);

 private:
  void refill();

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int cursor_ = 4;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace sdefim
