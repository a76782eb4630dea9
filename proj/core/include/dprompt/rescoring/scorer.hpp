#pragma once

#include "dprompt/adaptation/baselines.hpp"
#include "dprompt/model/model.hpp"
#include "dprompt/rescoring/rescore.hpp"
#include "dprompt/tokenizer/vocab.hpp"

namespace dprompt::rescore {

enum class LmScoreMode {
  sum,        // Σ_t log p(x_t | ·)
  per_token,  // the sum divided by the token count
};

struct ScorerOptions {
  LmScoreMode mode = LmScoreMode::sum;
  /// Prompts (learned or fixed) go through a prefix cache built once; false feeds the prompt
  /// rows through every layer for every hypothesis.
  bool use_cache = true;
};

/// Second-pass scorer for a backbone plus one adaptation artifact. Text is lowercased and
/// encoded with the vocabulary; unknown words score as UNK. The model and vocab must outlive
/// the scorer; artifact-derived state is copied in. Safe to call from several threads.
template <typename T>
Scorer make_scorer(const lm::Model<T>& model, const tok::Vocab& vocab,
                   const adapt::Artifact<T>& artifact = {}, ScorerOptions options = {});

}  // namespace dprompt::rescore
