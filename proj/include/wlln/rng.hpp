#pragma once

// Counter-based random numbers.
//
// Every uniform variate is a pure function of
//   (master seed, replication, purpose, draw kind, index)
// computed with Philox4x32-10. The seed is the 64-bit key; the 128-bit
// counter packs the remaining coordinates:
//
//   word 0 : index bits  0..31
//   word 1 : index bits 32..63
//   word 2 : replication bits  0..31
//   word 3 : replication bits 32..47 | purpose << 16 | draw << 24
//
// Philox is a bijection of the counter for a fixed key, so distinct
// coordinates never share a block. Replications are limited to 2^48.

#include <array>
#include <cstdint>

#include "wlln/errors.hpp"

namespace wlln::rng {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

namespace detail {

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline Counter philox_round(const Counter& c, const Key& k) {
  std::uint32_t hi0, lo0, hi1, lo1;
  mulhilo(0xD2511F53u, c[0], hi0, lo0);
  mulhilo(0xCD9E8D57u, c[2], hi1, lo1);
  return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

}  // namespace detail

/// Philox4x32 with 10 rounds (Salmon et al., Random123).
inline Counter philox4x32_10(Counter ctr, Key key) {
  ctr = detail::philox_round(ctr, key);
  for (int r = 1; r < 10; ++r) {
    key[0] += 0x9E3779B9u;
    key[1] += 0xBB67AE85u;
    ctr = detail::philox_round(ctr, key);
  }
  return ctr;
}

/// Which consumer a stream feeds. Keeps pilot fits away from verification samples.
enum class Purpose : std::uint8_t { verification = 0, pilot = 1, extraction = 2, thinning = 3 };

/// Per-index marginal draw, or a once-per-path factor draw.
enum class Draw : std::uint8_t { marginal = 0, factor = 1 };

inline constexpr std::uint64_t kMaxReplication = (std::uint64_t{1} << 48) - 1;

struct Stream {
  std::uint64_t seed = 0;
  std::uint64_t replication = 0;
  Purpose purpose = Purpose::verification;
};

inline Counter block(const Stream& s, Draw draw, std::uint64_t index) {
  if (s.replication > kMaxReplication) throw input_error("replication id exceeds 2^48");
  const Counter ctr{static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    static_cast<std::uint32_t>(s.replication),
                    static_cast<std::uint32_t>((s.replication >> 32) & 0xFFFFu) |
                        (static_cast<std::uint32_t>(s.purpose) << 16) |
                        (static_cast<std::uint32_t>(draw) << 24)};
  const Key key{static_cast<std::uint32_t>(s.seed), static_cast<std::uint32_t>(s.seed >> 32)};
  return philox4x32_10(ctr, key);
}

/// Maps 64 random bits to the open interval (0, 1) on the 2^-52 lattice shifted by half a step.
inline double to_open_unit(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
  // 52 bits plus half a step keeps the largest value at 1 − 2⁻⁵³, which is representable
  return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

/// Two independent uniforms in (0,1) from one Philox block.
inline std::array<double, 2> uniform_pair(const Stream& s, Draw draw, std::uint64_t index) {
  const Counter b = block(s, draw, index);
  return {to_open_unit(b[0], b[1]), to_open_unit(b[2], b[3])};
}

inline double uniform(const Stream& s, Draw draw, std::uint64_t index) {
  return uniform_pair(s, draw, index)[0];
}

}  // namespace wlln::rng
