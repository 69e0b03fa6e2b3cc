#pragma once

#include <cstdint>
#include <cstring>
#include <string_view>

namespace zrp {

// FNV-1a, 64 bit. Stable across platforms and standard libraries, unlike
// std::hash, so digests can be written into reports.
class Fnv1a {
 public:
  void update(const void* data, std::size_t size) noexcept {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      state_ ^= bytes[i];
      state_ *= 0x100000001B3ULL;
    }
  }
  void update(std::string_view s) noexcept { update(s.data(), s.size()); }
  void update(double v) noexcept {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof bits);
    update(&bits, sizeof bits);
  }
  void update(std::uint64_t v) noexcept { update(&v, sizeof v); }

  std::uint64_t value() const noexcept { return state_; }

 private:
  std::uint64_t state_ = 0xCBF29CE484222325ULL;
};

inline std::uint64_t fnv1a64(std::string_view s) noexcept {
  Fnv1a h;
  h.update(s);
  return h.value();
}

}  // namespace zrp
