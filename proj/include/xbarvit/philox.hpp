#pragma once

// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Every draw is
// a pure function of (key, counter), so noise realizations do not depend on
// evaluation order or thread count.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace xbarvit {

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

constexpr PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) {
  constexpr std::uint32_t kM0 = 0xD2511F53;
  constexpr std::uint32_t kM1 = 0xCD9E8D57;
  constexpr std::uint32_t kW0 = 0x9E3779B9;
  constexpr std::uint32_t kW1 = 0xBB67AE85;
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kW0;
      key[1] += kW1;
    }
    const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

// splitmix64 finalizer; used to fold structured identifiers into stream ids.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t combine_stream(std::uint64_t stream, std::uint64_t tag) {
  return mix64(stream ^ mix64(tag + 0x632BE59BD9B4E019ULL));
}

/// Stateless standard-normal source keyed by (seed, stream); element `index`
/// always yields the same value. Elements 2k and 2k+1 are the cosine and sine
/// branches of one Box-Muller transform on Philox block k.
class GaussianStream {
 public:
  constexpr GaussianStream(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

  double operator()(std::uint64_t index) const {
    const auto [c, s] = pair(index >> 1);
    return (index & 1) ? s : c;
  }

  // out[i] = (*this)(first + i), drawing each block once.
  void fill(std::uint64_t first, std::span<double> out) const {
    std::size_t i = 0;
    std::uint64_t index = first;
    if (i < out.size() && (index & 1)) {
      out[i++] = (*this)(index++);
    }
    for (; i + 1 < out.size(); i += 2, index += 2) {
      const auto [c, s] = pair(index >> 1);
      out[i] = c;
      out[i + 1] = s;
    }
    if (i < out.size()) out[i] = (*this)(index);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  std::array<double, 2> pair(std::uint64_t block) const {
    const PhiloxCounter out = philox4x32_10(
        {static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
         static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)},
        {static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)});
    // Two open-interval 53-bit uniforms.
    const double u1 = to_unit((std::uint64_t{out[0]} << 32) | out[1]);
    const double u2 = to_unit((std::uint64_t{out[2]} << 32) | out[3]);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(theta), r * std::sin(theta)};
  }

  static double to_unit(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
};

}  // namespace xbarvit
