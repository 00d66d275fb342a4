#pragma once

// Counter-based random numbers: Philox4x64-10 (Salmon et al., SC'11).
//
// Every variate is a pure function of (key, counter), so a path's noise is
// identical no matter which thread produces it or in what order.

#include <array>
#include <cstdint>

namespace sburgers {

/// Generator key of one Monte Carlo path. The mapping from
/// (master_seed, path_index) is the identity on the two 64-bit words; it is
/// injective and will not change between versions.
struct GeneratorKey {
  std::uint64_t seed = 0;
  std::uint64_t path_index = 0;

  friend bool operator==(const GeneratorKey&, const GeneratorKey&) = default;
};

constexpr GeneratorKey seed_stream(std::uint64_t master_seed, std::uint64_t path_index) {
  return {master_seed, path_index};
}

/// Logical streams sharing one key; the tag occupies a counter word.
enum class StreamTag : std::uint64_t {
  wiener = 0,
  ou_exact = 1,
  initial_condition = 2,
  auxiliary = 3,
};

using PhiloxBlock = std::array<std::uint64_t, 4>;

PhiloxBlock philox4x64(PhiloxBlock counter, std::array<std::uint64_t, 2> key);

/// Uniform on the open interval (0,1) from the top 52 bits; the half-step
/// offset keeps both endpoints out.
inline double to_open_unit(std::uint64_t bits) {
  return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

/// Four independent standard normals (two Box-Muller pairs) for the block
/// addressed by (key, tag, a, b).
std::array<double, 4> normal_block(const GeneratorKey& key, StreamTag tag, std::uint64_t a,
                                   std::uint64_t b);

/// Sequential standard-normal stream over a fixed (key, tag, a). Convenience
/// for draws that have no natural 2-D address.
class NormalStream {
 public:
  NormalStream(GeneratorKey key, StreamTag tag, std::uint64_t a = 0) : key_(key), tag_(tag), a_(a) {}

  double operator()() {
    if (used_ == 4) {
      block_ = normal_block(key_, tag_, a_, next_++);
      used_ = 0;
    }
    return block_[used_++];
  }

 private:
  GeneratorKey key_;
  StreamTag tag_;
  std::uint64_t a_;
  std::uint64_t next_ = 0;
  std::array<double, 4> block_{};
  int used_ = 4;
};

}  // namespace sburgers
