#include "rdlab/rng.hpp"

#include <cmath>
#include <numbers>

namespace rdlab {

namespace {
constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline double to_unit(std::uint32_t hi, std::uint32_t lo) {
  // 53 random bits, shifted by half an ulp so the result lies in (0,1).
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

inline std::array<std::uint32_t, 4> block(const StreamKey& key, std::uint32_t step, std::uint32_t index) {
  const std::array<std::uint32_t, 2> k{static_cast<std::uint32_t>(key.seed),
                                       static_cast<std::uint32_t>(key.seed >> 32)};
  return philox4x32({index, step, key.path, key.tag}, k);
}
}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> c, std::array<std::uint32_t, 2> k) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, c[0], hi0, lo0);
    mulhilo(kMul1, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    k[0] += kWeyl0;
    k[1] += kWeyl1;
  }
  return c;
}

void uniforms(const StreamKey& key, std::uint32_t step, std::span<double> out) {
  std::size_t i = 0;
  for (std::uint32_t b = 0; i < out.size(); ++b) {
    const auto r = block(key, step, b);
    out[i++] = to_unit(r[0], r[1]);
    if (i < out.size()) out[i++] = to_unit(r[2], r[3]);
  }
}

void standard_normals(const StreamKey& key, std::uint32_t step, std::span<double> out) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::size_t i = 0;
  for (std::uint32_t b = 0; i < out.size(); ++b) {
    const auto r = block(key, step, b);
    const double u1 = to_unit(r[0], r[1]);
    const double u2 = to_unit(r[2], r[3]);
    const double rad = std::sqrt(-2.0 * std::log(u1));
    out[i++] = rad * std::cos(two_pi * u2);
    if (i < out.size()) out[i++] = rad * std::sin(two_pi * u2);
  }
}

}  // namespace rdlab
