#pragma once

// Counter-based random streams (Philox4x32-10).
//
// Every random draw in the library is addressed by (seed, stream id, substream)
// rather than by the position of a shared generator, so results never depend
// on evaluation order or thread count.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace stabscore {

namespace detail {

inline void mulhilo32(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

}  // namespace detail

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

/// One Philox4x32 block with 10 rounds.
inline PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) {
  constexpr std::uint32_t kM0 = 0xD2511F53u;
  constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u;
  constexpr std::uint32_t kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kW0;
      key[1] += kW1;
    }
    std::uint32_t hi0, lo0, hi1, lo1;
    detail::mulhilo32(kM0, ctr[0], hi0, lo0);
    detail::mulhilo32(kM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

/// SplitMix64 finalizer, used to fold structured ids into a 64-bit stream id.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t combine_ids(std::uint64_t a, std::uint64_t b) { return mix64(a ^ mix64(b)); }

/// Purposes keep unrelated consumers of the same seed on disjoint streams.
enum class StreamPurpose : std::uint64_t {
  kKeypointSamples = 1,
  kRansac = 2,
  kTrialHomography = 3,
  kScene = 4,
  kNoise = 5,
  kTest = 99,
};

/// Stream id for the Monte-Carlo samples of a keypoint at (x, y). Positions are
/// quantized to 1/16 px so integer and near-integer keypoints key identically.
inline std::uint64_t keypoint_stream_id(double x, double y) {
  const auto qx = static_cast<std::int64_t>(std::llround(x * 16.0));
  const auto qy = static_cast<std::int64_t>(std::llround(y * 16.0));
  return combine_ids(static_cast<std::uint64_t>(StreamPurpose::kKeypointSamples),
                     combine_ids(static_cast<std::uint64_t>(qx), static_cast<std::uint64_t>(qy)));
}

inline std::uint64_t purpose_stream_id(StreamPurpose purpose, std::uint64_t index) {
  return combine_ids(static_cast<std::uint64_t>(purpose), index);
}

/// A sequential view over the Philox blocks of one (seed, id, substream) triple.
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t id, std::uint32_t substream = 0)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        counter_{0u, substream, static_cast<std::uint32_t>(id), static_cast<std::uint32_t>(id >> 32)} {}

  std::uint32_t next_u32() {
    if (pos_ == 4) {
      buffer_ = philox4x32_10(counter_, key_);
      ++counter_[0];
      pos_ = 0;
    }
    return buffer_[pos_++];
  }

  std::uint64_t next_u64() {
    const std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool coin() { return (next_u32() & 1u) != 0; }

  /// Unbiased integer in [0, bound) by rejection.
  std::uint32_t below(std::uint32_t bound) {
    if (bound <= 1) return 0;
    const std::uint32_t limit = static_cast<std::uint32_t>((0x100000000ull / bound) * bound - 1);
    for (;;) {
      const std::uint32_t r = next_u32();
      if (static_cast<std::uint64_t>(r) <= limit) return r % bound;
    }
  }

  /// Standard normal via Box-Muller (one value per call, the pair's sine half is dropped).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  PhiloxKey key_;
  PhiloxCounter counter_;
  PhiloxCounter buffer_{};
  int pos_ = 4;
};

}  // namespace stabscore
