#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace rdlab {

/// Philox4x32-10 block cipher used as a counter-based generator
/// (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3").
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key);

/// Stream identity: every draw is a pure function of (seed, path, tag, step, index).
/// `tag` separates independent uses within one path (noise, initial data, ...).
struct StreamKey {
  std::uint64_t seed = 0;
  std::uint32_t path = 0;
  std::uint32_t tag = 0;
};

/// Fill `out` with i.i.d. standard normals for the given step (Box-Muller on
/// 53-bit uniforms). Bit-identical for identical (key, step).
void standard_normals(const StreamKey& key, std::uint32_t step, std::span<double> out);

/// Uniform draws in (0,1).
void uniforms(const StreamKey& key, std::uint32_t step, std::span<double> out);

}  // namespace rdlab
