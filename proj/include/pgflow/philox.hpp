#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace pgflow {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Pure
/// function of (counter, key); no state.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }

  static Key key_from_seed(std::uint64_t seed) {
    return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
};

/// Maps a 32-bit word to the open interval (0, 1).
inline double open_uniform(std::uint32_t w) { return (static_cast<double>(w) + 0.5) * 0x1p-32; }

/// Maps a 32-bit word to [0, 1).
inline double half_open_uniform(std::uint32_t w) { return static_cast<double>(w) * 0x1p-32; }

/// Four standard normals from one block: Box-Muller on word pairs (0,1) and (2,3).
inline std::array<double, 4> box_muller(const Philox4x32::Counter& w) {
  std::array<double, 4> z{};
  for (int k = 0; k < 2; ++k) {
    const double r = std::sqrt(-2.0 * std::log(open_uniform(w[2 * k])));
    const double angle = 2.0 * std::numbers::pi * open_uniform(w[2 * k + 1]);
    z[2 * k] = r * std::cos(angle);
    z[2 * k + 1] = r * std::sin(angle);
  }
  return z;
}

}  // namespace pgflow
