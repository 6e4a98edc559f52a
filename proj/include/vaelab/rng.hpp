#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>

namespace vaelab {

/// SplitMix64 finalizer; used to derive engine seeds from (seed, stream).
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Reproducible random source.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard, seeded with splitmix64(seed ^ splitmix64(stream)). Everything
/// built on top (uniforms, normals, index draws) is implemented here rather
/// than via <random> distributions, whose algorithms are implementation
/// defined. Normal variates use the Marsaglia polar method; the second value
/// of each accepted pair is cached and returned by the next call.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on the open interval (0, 1).
  double uniform_open();
  /// Uniform integer in [0, n) by rejection (unbiased).
  std::size_t uniform_index(std::size_t n);
  double normal();

  /// Independent generator for sub-stream `index`; depends only on
  /// (seed, stream, index), never on how far this generator has advanced.
  SeededRng derive(std::uint64_t index) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

}  // namespace vaelab
