#pragma once

// Philox4x32-10 counter-based generator. Every episode owns a substream
// keyed by the master seed and addressed by (episode index, draw counter),
// so any partition of episodes over workers reproduces the same draws.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace banditpath {

class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kW0;
        key[1] += kW1;
      }
      ctr = single_round(ctr, key);
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;

  static Counter single_round(const Counter& c, const Key& k) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }
};

/// Per-episode random stream. Each block of four 32-bit words yields two
/// 53-bit uniforms; normals come from Box-Muller pairs.
class EpisodeStream {
 public:
  EpisodeStream(std::uint64_t master_seed, std::uint64_t episode)
      : key_{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32)},
        episode_(episode) {}

  /// Uniform on (0, 1].
  double uniform() {
    if (cursor_ == 2) refill();
    return buffer_[cursor_++];
  }

  double normal() {
    if (has_spare_normal_) {
      has_spare_normal_ = false;
      return spare_normal_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_normal_ = radius * std::sin(angle);
    has_spare_normal_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  void refill() {
    const Philox4x32::Counter ctr{static_cast<std::uint32_t>(episode_),
                                  static_cast<std::uint32_t>(episode_ >> 32), block_, 0u};
    const auto words = Philox4x32::generate(ctr, key_);
    buffer_[0] = to_unit(words[0], words[1]);
    buffer_[1] = to_unit(words[2], words[3]);
    ++block_;
    cursor_ = 0;
  }

  static double to_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
  }

  Philox4x32::Key key_;
  std::uint64_t episode_;
  std::uint32_t block_ = 0;
  std::array<double, 2> buffer_{};
  int cursor_ = 2;
  double spare_normal_ = 0.0;
  bool has_spare_normal_ = false;
};

}  // namespace banditpath
