#pragma once

#include <cstddef>
#include <span>
#include <string>

namespace dprompt {

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::span<const std::byte> bytes);

inline std::string sha256_hex(const std::string& s) {
  return sha256_hex(std::as_bytes(std::span(s.data(), s.size())));
}

}  // namespace dprompt
