#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace lmfap {

/// FNV-1a 64-bit, rendered as 16 hex digits. Used for config and plan digests.
inline std::string digest_hex(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace lmfap
