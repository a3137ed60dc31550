#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace divek {

// Stable across platforms and runs (unlike std::hash).
std::uint64_t fnv1a64(std::string_view s);

// splitmix64 finalizer; combines seeds into a well-mixed 64-bit value.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view salt) {
  return mix_seed(base, fnv1a64(salt));
}

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

std::string base64_encode(std::string_view data);

}  // namespace divek
