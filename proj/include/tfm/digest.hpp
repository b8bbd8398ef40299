#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace tfm {

// FNV-1a 64-bit hash, used to stamp reports with a digest of the resolved
// configuration so runs are traceable to their inputs.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string digest_hex(std::string_view s) {
  static const char* hex = "0123456789abcdef";
  std::uint64_t h = fnv1a64(s);
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = hex[h & 0xf];
    h >>= 4;
  }
  return out;
}

} // namespace tfm
