#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dprompt::harness {

/// Non-empty lines of a UTF-8 text file, trailing '\r' removed.
std::vector<std::string> read_lines(const std::filesystem::path& path);
void write_lines(const std::filesystem::path& path, std::span<const std::string> lines);

struct Split {
  std::vector<std::string> train, dev;
};

/// Seeded shuffle, then the first round(ratio·n) lines (at least one, at most n − 1) train.
/// Throws std::invalid_argument for fewer than two lines or a ratio outside (0, 1).
Split split_corpus(std::span<const std::string> corpus, double ratio, std::uint64_t seed);

}  // namespace dprompt::harness
