#pragma once

#include <array>
#include <cstdint>

namespace panelfe::rng {

// Philox4x64-10 (Salmon et al., SC'11). A keyed bijection on 256-bit
// counters: any draw is addressable directly, so results never depend on
// the order in which draws are consumed.
struct Philox4x64 {
  using counter_type = std::array<std::uint64_t, 4>;
  using key_type = std::array<std::uint64_t, 2>;

  static counter_type block(counter_type ctr, key_type key) {
    constexpr std::uint64_t m0 = 0xD2E7470EE14C6C93ULL;
    constexpr std::uint64_t m1 = 0xCA5A826395121157ULL;
    constexpr std::uint64_t w0 = 0x9E3779B97F4A7C15ULL;
    constexpr std::uint64_t w1 = 0xBB67AE8584CAA73BULL;
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += w0;
        key[1] += w1;
      }
      const unsigned __int128 p0 = static_cast<unsigned __int128>(m0) * ctr[0];
      const unsigned __int128 p1 = static_cast<unsigned __int128>(m1) * ctr[2];
      const auto hi0 = static_cast<std::uint64_t>(p0 >> 64);
      const auto lo0 = static_cast<std::uint64_t>(p0);
      const auto hi1 = static_cast<std::uint64_t>(p1 >> 64);
      const auto lo1 = static_cast<std::uint64_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }
};

// 52 random bits mapped to the open interval (0,1). With 53 bits the top
// value 1 - 2^-54 would round to 1.
inline double to_open_unit(std::uint64_t bits) {
  return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

// splitmix64 finalizer; used to derive child seeds.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Purpose tags keep streams of one replication apart from each other.
enum class Purpose : std::uint64_t { data = 1, shocks = 2, calibration = 3, ife = 4, shock_store = 5 };

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index, Purpose purpose) {
  return mix64(mix64(seed ^ mix64(index)) + static_cast<std::uint64_t>(purpose));
}

// Uniform draw addressed by a 3-word coordinate under a 64-bit seed.
inline double uniform_at(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c,
                         Purpose purpose) {
  const auto out =
      Philox4x64::block({a, b, c, static_cast<std::uint64_t>(purpose)}, {seed, 0x5EEDULL});
  return to_open_unit(out[0]);
}

// Sequential stream (seed, stream id, purpose). Each block yields four
// draws; the position in the stream is the counter.
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t stream_id, Purpose purpose)
      : key_{seed, 0x5EEDULL}, stream_id_(stream_id), purpose_(purpose) {}

  double uniform() {
    if (used_ == 4) refill();
    return to_open_unit(buffer_[used_++]);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

 private:
  void refill() {
    buffer_ = Philox4x64::block({block_++, 0, stream_id_, static_cast<std::uint64_t>(purpose_) << 32},
                                key_);
    used_ = 0;
  }

  Philox4x64::key_type key_;
  std::uint64_t stream_id_;
  Purpose purpose_;
  std::uint64_t block_ = 0;
  Philox4x64::counter_type buffer_{};
  int used_ = 4;
};

}  // namespace panelfe::rng
