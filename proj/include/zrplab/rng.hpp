#pragma once

// Counter-based random streams. A stream is a 64-bit key plus a draw
// counter; the i-th output is a bijective mix of (key + i * golden). Keys are
// derived by hashing (master seed, replica, tag, index), so every site of
// every mark field owns an independent, replayable stream and no state is
// shared between replicas.

#include <cmath>
#include <cstdint>
#include <limits>

namespace zrp {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) noexcept {
  return mix64(h + kGolden + mix64(v + 0x632BE59BD9B4E019ULL));
}

// Stream families. Each family is keyed separately so that, for example, the
// initial configuration does not share draws with the mark field.
enum class StreamTag : std::uint64_t {
  InitialConfig = 1,
  MarkField = 2,      // graphical construction of a plain simulation
  ReferenceField = 3, // coupling: field driving the reference process
  FollowerField = 4,  // coupling: field driving unmet follower particles
  InitialConfigB = 5, // second independent configuration in couplings
  Resample = 6,       // conditioning / rejection draws
  Bootstrap = 7,
  Auxiliary = 8,
};

struct SeedPath {
  std::uint64_t seed = 0;
  std::uint64_t replica = 0;

  std::uint64_t key(StreamTag tag, std::uint64_t index = 0) const noexcept {
    std::uint64_t h = mix64(seed ^ 0xD1B54A32D192ED03ULL);
    h = hash_combine(h, replica);
    h = hash_combine(h, static_cast<std::uint64_t>(tag));
    return hash_combine(h, index);
  }
};

class Stream {
 public:
  using result_type = std::uint64_t;

  Stream() = default;
  explicit Stream(std::uint64_t key) noexcept : key_(key) {}
  Stream(const SeedPath& path, StreamTag tag, std::uint64_t index = 0) noexcept
      : key_(path.key(tag, index)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return next_u64(); }

  std::uint64_t next_u64() noexcept { return mix64(key_ + (++counter_) * kGolden); }

  // Uniform in [0, 1) with 53 bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1].
  double uniform_pos() noexcept { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

  double exponential(double rate) noexcept { return -std::log(uniform_pos()) / rate; }

  // Uniform integer in [0, n), n > 0 (multiply-shift, bias below 2^-64 * n).
  std::uint64_t below(std::uint64_t n) noexcept {
    __extension__ using u128 = unsigned __int128;
    return static_cast<std::uint64_t>((static_cast<u128>(next_u64()) * n) >> 64);
  }

  int sign() noexcept { return (next_u64() >> 63) ? 1 : -1; }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace zrp
