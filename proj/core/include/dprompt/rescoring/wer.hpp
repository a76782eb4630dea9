#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

namespace dprompt::rescore {

/// Word-level Levenshtein distance with unit substitution, deletion and insertion costs.
std::size_t edit_distance(std::span<const std::string> ref, std::span<const std::string> hyp);

struct WerCounts {
  std::size_t edits = 0;
  std::size_t ref_words = 0;

  double rate() const { return ref_words == 0 ? 0.0 : double(edits) / double(ref_words); }
  WerCounts& operator+=(const WerCounts& o) {
    edits += o.edits;
    ref_words += o.ref_words;
    return *this;
  }
};

/// Both sides are lowercased and split on whitespace. Throws std::invalid_argument when the
/// reference has no words.
WerCounts wer_counts(std::string_view reference, std::string_view hypothesis);
double wer(std::string_view reference, std::string_view hypothesis);

}  // namespace dprompt::rescore
