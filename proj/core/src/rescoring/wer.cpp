#include "dprompt/rescoring/wer.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "dprompt/tokenizer/vocab.hpp"

namespace dprompt::rescore {

std::size_t edit_distance(std::span<const std::string> ref, std::span<const std::string> hyp) {
  // Single rolling row over the hypothesis.
  std::vector<std::size_t> row(hyp.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= hyp.size(); ++j) {
      const std::size_t up = row[j];
      const std::size_t sub = diag + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      row[j] = std::min({sub, up + 1, row[j - 1] + 1});
      diag = up;
    }
  }
  return row[hyp.size()];
}

WerCounts wer_counts(std::string_view reference, std::string_view hypothesis) {
  const auto ref = tok::split_words(reference);
  if (ref.empty()) throw std::invalid_argument("wer: empty reference");
  const auto hyp = tok::split_words(hypothesis);
  return WerCounts{edit_distance(ref, hyp), ref.size()};
}

double wer(std::string_view reference, std::string_view hypothesis) {
  return wer_counts(reference, hypothesis).rate();
}

}  // namespace dprompt::rescore
