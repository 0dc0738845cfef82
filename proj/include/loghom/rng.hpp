#pragma once

// Counter-based random numbers (Philox4x32-10). A stream is identified by
// (master seed, replica index, stream id); draws are a pure function of that
// key and the draw counter, so replicas can be generated in any order.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace loghom {

struct RngKey {
  std::uint64_t master = 0;
  std::uint32_t replica = 0;
  std::uint32_t stream = 0;

  RngKey() = default;
  RngKey(std::uint64_t seed) : master(seed) {}  // NOLINT(google-explicit-constructor)
  RngKey(std::uint64_t seed, std::uint32_t rep, std::uint32_t str)
      : master(seed), replica(rep), stream(str) {}

  RngKey with_stream(std::uint32_t s) const { return {master, replica, s}; }

  /// Single 64-bit summary, recorded as the "replica seed" in outputs.
  std::uint64_t fingerprint() const {
    std::uint64_t h = master ^ 0x9E3779B97F4A7C15ULL;
    h ^= (static_cast<std::uint64_t>(replica) << 32) | stream;
    h = (h ^ (h >> 30)) * 0xBF58476D1CE4E5B9ULL;
    h = (h ^ (h >> 27)) * 0x94D049BB133111EBULL;
    return h ^ (h >> 31);
  }

  friend bool operator==(const RngKey&, const RngKey&) = default;
};

namespace detail {

inline void philox_round(std::array<std::uint32_t, 4>& ctr, const std::array<std::uint32_t, 2>& key) {
  constexpr std::uint64_t m0 = 0xD2511F53u;
  constexpr std::uint64_t m1 = 0xCD9E8D57u;
  const std::uint64_t p0 = m0 * ctr[0];
  const std::uint64_t p1 = m1 * ctr[2];
  const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
  const auto lo0 = static_cast<std::uint32_t>(p0);
  const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
  const auto lo1 = static_cast<std::uint32_t>(p1);
  ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
}

}  // namespace detail

/// Philox4x32 with 10 rounds.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
  for (int r = 0; r < 10; ++r) {
    detail::philox_round(ctr, key);
    key[0] += 0x9E3779B9u;
    key[1] += 0xBB67AE85u;
  }
  return ctr;
}

class CounterRng {
 public:
  explicit CounterRng(RngKey key) : key_(key) {}

  /// Uniform on the open interval (0, 1).
  double uniform() {
    const std::uint64_t bits = next_u64();
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * std::numbers::pi * u2;
    spare_ = rad * std::sin(ang);
    has_spare_ = true;
    return rad * std::cos(ang);
  }

  std::uint64_t next_u64() {
    if (used_ >= 2) refill();
    const std::uint64_t v = (static_cast<std::uint64_t>(block_[2 * used_]) << 32) | block_[2 * used_ + 1];
    ++used_;
    return v;
  }

  const RngKey& key() const { return key_; }

 private:
  void refill() {
    const std::array<std::uint32_t, 4> ctr = {static_cast<std::uint32_t>(counter_),
                                              static_cast<std::uint32_t>(counter_ >> 32),
                                              key_.replica, key_.stream};
    const std::array<std::uint32_t, 2> k = {static_cast<std::uint32_t>(key_.master),
                                            static_cast<std::uint32_t>(key_.master >> 32)};
    block_ = philox4x32(ctr, k);
    ++counter_;
    used_ = 0;
  }

  RngKey key_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int used_ = 2;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace loghom
