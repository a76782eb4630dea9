#include "dprompt/rescoring/scorer.hpp"

#include <memory>
#include <optional>

#include "dprompt/util/errors.hpp"

namespace dprompt::rescore {

namespace {

template <typename T>
struct ScorerState {
  const lm::Model<T>* model = nullptr;
  std::optional<lm::Model<T>> own_model;
  const tok::Vocab* vocab = nullptr;
  std::optional<num::Matrix<T>> prompt;
  std::optional<lm::PrefixCache<T>> cache;
  std::optional<lm::DomainAdapters<T>> adapters;
  ScorerOptions options;

  const lm::Model<T>& backbone() const { return own_model ? *own_model : *model; }

  lm::Conditioning<T> conditioning() const {
    lm::Conditioning<T> c;
    if (cache) c.cache = &*cache;
    if (prompt) c.prompt = &*prompt;
    if (adapters) c.adapters = &*adapters;
    return c;
  }

  void use_prompt(num::Matrix<T> rows) {
    if (options.use_cache) {
      cache = lm::build_prefix_cache(backbone(), rows);
    } else {
      prompt = std::move(rows);
    }
  }
};

}  // namespace

template <typename T>
Scorer make_scorer(const lm::Model<T>& model, const tok::Vocab& vocab,
                   const adapt::Artifact<T>& artifact, ScorerOptions options) {
  auto state = std::make_shared<ScorerState<T>>();
  state->model = &model;
  state->vocab = &vocab;
  state->options = options;

  if (const auto* p = std::get_if<adapt::DomainPrompt<T>>(&artifact)) {
    if (p->base_fingerprint != model.fingerprint()) {
      throw FingerprintMismatch("domain prompt", model.fingerprint(), p->base_fingerprint);
    }
    state->use_prompt(p->embeddings);
  } else if (const auto* f = std::get_if<adapt::FixedPrompt>(&artifact)) {
    if (!f->words.empty()) state->use_prompt(adapt::embeddings_for(model, vocab, f->words));
  } else if (const auto* a = std::get_if<lm::DomainAdapters<T>>(&artifact)) {
    state->adapters = *a;
  } else if (const auto* params = std::get_if<lm::Parameters<T>>(&artifact)) {
    state->own_model.emplace(model.config(), *params);
  }

  return [state](const std::string& text) -> double {
    const auto seq = state->vocab->encode(text);
    const auto s = lm::sequence_score(state->backbone(), seq, state->conditioning());
    if (state->options.mode == LmScoreMode::per_token) return s.total_logprob / double(s.tokens);
    return s.total_logprob;
  };
}

template Scorer make_scorer<float>(const lm::Model<float>&, const tok::Vocab&,
                                   const adapt::Artifact<float>&, ScorerOptions);
template Scorer make_scorer<double>(const lm::Model<double>&, const tok::Vocab&,
                                    const adapt::Artifact<double>&, ScorerOptions);

}  // namespace dprompt::rescore
