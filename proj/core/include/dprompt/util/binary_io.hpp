#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dprompt {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

/// Appends values as little-endian IEEE-754 binary32.
template <typename T>
void append_f32_le(std::vector<std::byte>& out, std::span<const T> values) {
  const std::size_t start = out.size();
  out.resize(start + values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(values[i]));
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    std::memcpy(out.data() + start + i * 4, &bits, 4);
  }
}

/// Reads count little-endian binary32 values starting at offset.
template <typename T>
std::vector<T> read_f32_le(std::span<const std::byte> in, std::size_t offset, std::size_t count) {
  if (offset + count * 4 > in.size()) throw std::runtime_error("binary blob truncated");
  std::vector<T> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, in.data() + offset + i * 4, 4);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    out[i] = static_cast<T>(std::bit_cast<float>(bits));
  }
  return out;
}

std::vector<std::byte> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::byte> bytes);

}  // namespace dprompt
