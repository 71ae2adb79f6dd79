#pragma once

#include <array>
#include <cstdint>

namespace brwre {

/// Philox4x32-10 block function (Salmon et al. counter-based generator).
/// Pure: the output depends only on (counter, key).
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32_10(PhiloxCounter counter, PhiloxKey key) noexcept;

/// Independent randomness domains derived from one master seed.
enum class StreamDomain : std::uint32_t {
  tree = 1,
  environment = 2,
  auxiliary = 3,
};

/// Derives the Philox key for (master seed, domain).
PhiloxKey derive_key(std::uint64_t master_seed, StreamDomain domain) noexcept;

/// A random stream addressed by (seed, domain, a, b, c). The fourth counter
/// word is the block index inside the stream. Tree particles use
/// (a, b, c) = (replica, generation, ordinal); environments use (stream id, 0, 0).
///
/// Streams are cheap value types: constructing one performs no work, so one
/// per particle is fine.
class RandomStream {
 public:
  RandomStream(std::uint64_t master_seed, StreamDomain domain, std::uint32_t a,
               std::uint32_t b = 0, std::uint32_t c = 0) noexcept
      : key_(derive_key(master_seed, domain)), counter_{a, b, c, 0} {}

  RandomStream(PhiloxKey key, std::uint32_t a, std::uint32_t b, std::uint32_t c) noexcept
      : key_(key), counter_{a, b, c, 0} {}

  std::uint32_t next_u32() noexcept {
    if (used_ == 4) refill();
    return block_[used_++];
  }

  std::uint64_t next_u64() noexcept {
    const std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1]; safe as a log argument.
  double uniform_pos() noexcept {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  /// Standard normal by Box-Muller; the second variate of each pair is cached.
  double normal() noexcept;

  // UniformRandomBitGenerator surface.
  using result_type = std::uint32_t;
  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return 0xffffffffu; }
  result_type operator()() noexcept { return next_u32(); }

 private:
  void refill() noexcept {
    block_ = philox4x32_10(counter_, key_);
    ++counter_[3];
    used_ = 0;
  }

  PhiloxKey key_;
  PhiloxCounter counter_;
  PhiloxCounter block_{};
  unsigned used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace brwre
