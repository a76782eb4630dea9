#include "dprompt/rescoring/rescore.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "dprompt/rescoring/wer.hpp"

namespace dprompt::rescore {

void RescoreWeights::validate() const {
  for (double x : {am, flm, lm}) {
    if (!std::isfinite(x) || x < 0) throw std::invalid_argument("rescore weights must be finite and non-negative");
  }
  if (am == 0 && flm == 0 && lm == 0) throw std::invalid_argument("rescore weights are all zero");
}

double interpolated_score(const Hypothesis& hyp, double lm_logprob, const RescoreWeights& w) {
  return w.am * hyp.am_score + w.flm * hyp.flm_score + w.lm * lm_logprob;
}

namespace {

UtteranceScores score_one(const NBestList& list, const Scorer& scorer) {
  UtteranceScores out;
  try {
    out.lm.reserve(list.hyps.size());
    for (const auto& h : list.hyps) {
      const double s = scorer(h.text);
      if (!std::isfinite(s)) throw std::domain_error("non-finite score for \"" + h.text + "\"");
      out.lm.push_back(s);
    }
  } catch (const std::exception& e) {
    out.lm.clear();
    out.error = e.what();
    if (out.error.empty()) out.error = "scorer failed";
  }
  return out;
}

}  // namespace

std::vector<UtteranceScores> score_nbest(std::span<const NBestList> lists, const Scorer& scorer,
                                         std::size_t threads) {
  std::vector<UtteranceScores> out(lists.size());
  threads = std::max<std::size_t>(1, std::min(threads, lists.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < lists.size(); ++i) out[i] = score_one(lists[i], scorer);
    return out;
  }
  {
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < threads; ++w) {
      workers.emplace_back([&, w] {
        for (std::size_t i = w; i < lists.size(); i += threads) out[i] = score_one(lists[i], scorer);
      });
    }
  }
  return out;
}

std::size_t select(const NBestList& list, const UtteranceScores& scores, const RescoreWeights& w) {
  if (scores.failed() || list.hyps.empty()) return 0;
  if (scores.lm.size() != list.hyps.size()) throw std::invalid_argument("score count does not match hypotheses");
  std::size_t best = 0;
  double best_score = interpolated_score(list.hyps[0], scores.lm[0], w);
  for (std::size_t i = 1; i < list.hyps.size(); ++i) {
    const double s = interpolated_score(list.hyps[i], scores.lm[i], w);
    if (s > best_score) {
      best = i;
      best_score = s;
    }
  }
  return best;
}

std::vector<Selection> selections(std::span<const NBestList> lists,
                                  std::span<const UtteranceScores> scores, const RescoreWeights& w) {
  w.validate();
  if (scores.size() != lists.size()) throw std::invalid_argument("score count does not match utterances");
  std::vector<Selection> out;
  out.reserve(lists.size());
  for (std::size_t i = 0; i < lists.size(); ++i) {
    const std::size_t idx = select(lists[i], scores[i], w);
    out.push_back(Selection{lists[i].utt_id, idx, lists[i].hyps.at(idx).text, scores[i].error});
  }
  return out;
}

std::vector<Selection> rescore(std::span<const NBestList> lists, const Scorer& scorer,
                               const RescoreWeights& w, std::size_t threads) {
  w.validate();
  const auto scores = score_nbest(lists, scorer, threads);
  return selections(lists, scores, w);
}

namespace {

std::size_t corpus_edits(std::span<const NBestList> dev, std::span<const UtteranceScores> scores,
                         const RescoreWeights& w) {
  std::size_t edits = 0;
  for (std::size_t i = 0; i < dev.size(); ++i) {
    const auto idx = select(dev[i], scores[i], w);
    edits += wer_counts(*dev[i].ref, dev[i].hyps[idx].text).edits;
  }
  return edits;
}

}  // namespace

RescoreWeights tune_weights(std::span<const NBestList> dev, std::span<const UtteranceScores> scores,
                            std::span<const double> grid, RescoreWeights start,
                            std::size_t max_sweeps) {
  start.validate();
  if (grid.empty()) throw std::invalid_argument("tune_weights: empty grid");
  if (scores.size() != dev.size()) throw std::invalid_argument("score count does not match utterances");
  for (const auto& list : dev) {
    if (!list.ref) throw std::invalid_argument("tune_weights: utterance " + list.utt_id + " has no reference");
  }
  RescoreWeights w = start;
  std::size_t best = corpus_edits(dev, scores, w);
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    bool changed = false;
    for (double RescoreWeights::*coord : {&RescoreWeights::am, &RescoreWeights::flm, &RescoreWeights::lm}) {
      for (double value : grid) {
        RescoreWeights trial = w;
        trial.*coord = value;
        if (!std::isfinite(value) || value < 0) throw std::invalid_argument("tune_weights: grid values must be non-negative");
        if (trial.am == 0 && trial.flm == 0 && trial.lm == 0) continue;
        const std::size_t edits = corpus_edits(dev, scores, trial);
        if (edits < best) {
          best = edits;
          w = trial;
          changed = true;
        }
      }
    }
    if (!changed) break;
  }
  return w;
}

}  // namespace dprompt::rescore
