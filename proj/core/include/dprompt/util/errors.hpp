#pragma once

#include <stdexcept>
#include <string>

namespace dprompt {

/// An artifact (prefix cache, prompt, adapter set) was built against different backbone weights.
class FingerprintMismatch : public std::runtime_error {
 public:
  FingerprintMismatch(const std::string& what_kind, const std::string& expected,
                      const std::string& actual)
      : std::runtime_error(what_kind + " fingerprint mismatch: expected " + expected.substr(0, 16) +
                           "…, got " + actual.substr(0, 16) + "…") {}
};

/// A token sequence plus prefix does not fit in the positional table.
class SequenceTooLong : public std::length_error {
 public:
  using std::length_error::length_error;
};

}  // namespace dprompt
