#pragma once

#include <cstdint>
#include <cstring>
#include <string_view>

namespace ggp::detail {

// 64-bit FNV-1a. Stable across platforms with the same endianness handling
// (integers and doubles are fed byte-wise in little-endian order).
class Fnv1a {
 public:
  void add_bytes(const void* data, std::size_t len) {
    auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      state_ ^= p[i];
      state_ *= 1099511628211ULL;
    }
  }
  void add(std::uint64_t x) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(x >> (8 * i));
    add_bytes(buf, 8);
  }
  void add(double x) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof bits);
    add(bits);
  }
  void add(std::string_view s) { add_bytes(s.data(), s.size()); }
  std::uint64_t value() const { return state_; }

 private:
  std::uint64_t state_ = 14695981039346656037ULL;
};

}  // namespace ggp::detail
