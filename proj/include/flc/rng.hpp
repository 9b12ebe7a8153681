#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace flc {

/// Purpose tags mixed into stream keys so that independent consumers never
/// share a stream.
enum class StreamDomain : std::uint64_t {
  kLaplaceNoise = 0x4C41504C,  // "LAPL"
  kBatchShuffle = 0x53485546,  // "SHUF"
  kPartition = 0x50415254,     // "PART"
  kSynthetic = 0x53594E54,     // "SYNT"
  kInit = 0x494E4954,          // "INIT"
};

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Counter-based generator: the i-th output is mix64(key ^ mix64(i)).
///
/// The key is derived from a tuple of words (run seed, domain, client, round,
/// ...) by chained mixing, so any stream can be reconstructed from its tuple
/// alone without replaying earlier draws. Output is specified bit-for-bit and
/// does not depend on the standard library's distributions.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}

  static CounterRng from_words(std::initializer_list<std::uint64_t> words) noexcept {
    std::uint64_t k = 0x6A09E667F3BCC909ULL;
    for (std::uint64_t w : words) k = mix64(k ^ w);
    return CounterRng(k);
  }

  static CounterRng for_stream(std::uint64_t seed, StreamDomain domain, std::uint64_t client = 0,
                               std::uint64_t round = 0, std::uint64_t epoch = 0) noexcept {
    return from_words({seed, static_cast<std::uint64_t>(domain), client, round, epoch});
  }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept { return mix64(key_ ^ mix64(counter_++)); }

  /// Uniform on [0, 1) with 53 bits of resolution.
  double next_unit() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, bound) by rejection (bound > 0).
  std::uint64_t next_below(std::uint64_t bound) noexcept {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % bound;
  }

  /// Standard normal via Box-Muller; consumes two draws per call.
  double next_normal() noexcept;

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Fisher-Yates permutation of [0, n) driven by `rng`.
std::vector<std::size_t> seeded_permutation(std::size_t n, CounterRng& rng);

}  // namespace flc
