#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dprompt/rescoring/nbest.hpp"

namespace dprompt::rescore {

struct RescoreWeights {
  double am = 1;
  double flm = 1;
  double lm = 1;

  /// Throws std::invalid_argument on a negative or non-finite weight, or when all are zero.
  void validate() const;
  bool operator==(const RescoreWeights&) const = default;
};

/// λ_am·am + λ_flm·flm + λ_lm·lm. Higher is better.
double interpolated_score(const Hypothesis& hyp, double lm_logprob, const RescoreWeights& w);

/// Second-pass score of one hypothesis text (a log-probability). May throw.
using Scorer = std::function<double(const std::string&)>;

/// Second-pass scores of every hypothesis of one utterance, or the reason scoring stopped.
struct UtteranceScores {
  std::vector<double> lm;  // one per hypothesis; empty when failed
  std::string error;
  bool failed() const { return !error.empty(); }
};

/// Scores every hypothesis. A scorer exception marks that utterance failed and the rest
/// continue. With threads > 1 utterances are split across workers; results keep input order.
std::vector<UtteranceScores> score_nbest(std::span<const NBestList> lists, const Scorer& scorer,
                                         std::size_t threads = 1);

/// Index of the best interpolated score, lowest index on ties. A failed utterance keeps the
/// first-pass 1-best.
std::size_t select(const NBestList& list, const UtteranceScores& scores, const RescoreWeights& w);

struct Selection {
  std::string utt_id;
  std::size_t index = 0;
  std::string text;
  std::string error;  // non-empty when scoring this utterance failed
};

std::vector<Selection> rescore(std::span<const NBestList> lists, const Scorer& scorer,
                               const RescoreWeights& w, std::size_t threads = 1);

std::vector<Selection> selections(std::span<const NBestList> lists,
                                  std::span<const UtteranceScores> scores, const RescoreWeights& w);

/// Coordinate search over each λ in turn on a dev set with references; each coordinate takes the
/// grid value with the lowest corpus WER, keeping the current value on ties. Stops when a full
/// sweep changes nothing or after max_sweeps.
RescoreWeights tune_weights(std::span<const NBestList> dev, std::span<const UtteranceScores> scores,
                            std::span<const double> grid, RescoreWeights start = {},
                            std::size_t max_sweeps = 4);

}  // namespace dprompt::rescore
