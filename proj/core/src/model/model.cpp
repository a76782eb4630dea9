#include "dprompt/model/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dprompt/model/transformer.hpp"
#include "dprompt/numerics/ops.hpp"
#include "dprompt/util/errors.hpp"

namespace dprompt::lm {

namespace {

template <typename T>
void check_shapes(const ModelConfig& c, const Parameters<T>& p) {
  const Parameters<T> expected = zero_parameters<T>(c);
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  expected.visit([&](const std::string&, const Matrix<T>& m, TensorGroup) {
    shapes.emplace_back(m.rows(), m.cols());
  });
  std::size_t i = 0;
  bool ok = p.layers.size() == c.n_layers;
  if (ok) {
    p.visit([&](const std::string& name, const Matrix<T>& m, TensorGroup) {
      if (shapes[i] != std::pair{m.rows(), m.cols()}) {
        throw std::invalid_argument("parameter " + name + " has shape " + std::to_string(m.rows()) +
                                    "x" + std::to_string(m.cols()) + ", config implies " +
                                    std::to_string(shapes[i].first) + "x" +
                                    std::to_string(shapes[i].second));
      }
      ++i;
    });
  }
  if (!ok) throw std::invalid_argument("parameter layer count does not match config");
}

template <typename T>
Matrix<T> run_logits(const ModelConfig& config, const Parameters<T>& params,
                     std::span<const tok::TokenId> inputs, const Conditioning<T>& cond) {
  if (cond.prompt && cond.cache) {
    throw std::invalid_argument("forward: pass either prompt embeddings or a prefix cache, not both");
  }
  if (cond.cache && cond.adapters) {
    throw std::invalid_argument("forward: prefix caches are built without adapters");
  }
  Tape<T> tape;
  const BoundModel bound = bind_model(tape, config, params, cond.adapters, TrainableSet{});
  NodeId logits;
  if (cond.cache && cond.cache->length > 0) {
    const auto& cache = *cond.cache;
    if (cache.keys.size() != config.n_layers || cache.values.size() != config.n_layers) {
      throw std::invalid_argument("prefix cache layer count does not match the model");
    }
    PrefixNodes prefix;
    prefix.length = cache.length;
    for (std::size_t l = 0; l < config.n_layers; ++l) {
      prefix.keys.push_back(tape.parameter(cache.keys[l], false));
      prefix.values.push_back(tape.parameter(cache.values[l], false));
    }
    logits = prefixed_logits(tape, bound, inputs, &prefix);
  } else if (cond.prompt && cond.prompt->rows() > 0) {
    logits = full_logits(tape, bound, tape.parameter(*cond.prompt, false), inputs);
  } else {
    logits = full_logits(tape, bound, std::nullopt, inputs);
  }
  return tape.value(logits);
}

template <typename T>
std::size_t prefix_rows(const Conditioning<T>& cond) {
  if (cond.cache) return cond.cache->length;
  if (cond.prompt) return cond.prompt->rows();
  return 0;
}

}  // namespace

template <typename T>
Model<T>::Model(ModelConfig config, Parameters<T> params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  check_shapes(config_, params_);
  fingerprint_ = lm::fingerprint(params_);
}

template <typename T>
Model<T> init_model(const ModelConfig& config) {
  return Model<T>(config, init_parameters<T>(config));
}

template <typename T>
Matrix<T> forward(const ModelConfig& config, const Parameters<T>& params,
                  std::span<const tok::TokenId> tokens, const Conditioning<T>& cond) {
  if (tokens.empty()) throw std::invalid_argument("forward: empty token sequence");
  check_length(config, prefix_rows(cond), tokens.size());
  for (auto id : tokens) {
    if (id < 0 || static_cast<std::size_t>(id) >= config.vocab_size) {
      throw std::out_of_range("forward: token id " + std::to_string(id) + " outside vocabulary");
    }
  }
  const auto inputs = shifted_inputs(tokens);
  return num::kernel::log_softmax_rows(run_logits(config, params, inputs, cond));
}

template <typename T>
Matrix<T> forward(const Model<T>& model, const tok::TokenSequence& tokens,
                  const Conditioning<T>& cond) {
  if (cond.cache && cond.cache->fingerprint != model.fingerprint()) {
    throw FingerprintMismatch("prefix cache", model.fingerprint(), cond.cache->fingerprint);
  }
  if (cond.adapters && !cond.adapters->base_fingerprint.empty() &&
      cond.adapters->base_fingerprint != model.fingerprint()) {
    throw FingerprintMismatch("adapter set", model.fingerprint(), cond.adapters->base_fingerprint);
  }
  return forward(model.config(), model.params(), std::span<const tok::TokenId>(tokens.ids), cond);
}

template <typename T>
SequenceScore sequence_score(const Model<T>& model, const tok::TokenSequence& tokens,
                             const Conditioning<T>& cond) {
  const Matrix<T> logp = forward(model, tokens, cond);
  const double floor = std::log(num::kProbabilityFloor);
  SequenceScore s;
  s.tokens = tokens.ids.size();
  for (std::size_t t = 0; t < s.tokens; ++t) {
    s.total_logprob += std::max(static_cast<double>(logp(t, static_cast<std::size_t>(tokens.ids[t]))), floor);
  }
  s.perplexity = std::exp(-s.total_logprob / static_cast<double>(s.tokens));
  return s;
}

template <typename T>
double corpus_perplexity(const Model<T>& model, std::span<const tok::TokenSequence> corpus,
                         const Conditioning<T>& cond) {
  double total = 0;
  std::size_t count = 0;
  for (const auto& seq : corpus) {
    if (seq.ids.empty()) continue;
    const auto s = sequence_score(model, seq, cond);
    total += s.total_logprob;
    count += s.tokens;
  }
  if (count == 0) throw std::invalid_argument("corpus_perplexity: no tokens");
  return std::exp(-total / static_cast<double>(count));
}

template <typename T>
PrefixCache<T> build_prefix_cache(const Model<T>& model, const Matrix<T>& embeddings) {
  const auto& config = model.config();
  PrefixCache<T> cache;
  cache.fingerprint = model.fingerprint();
  cache.length = embeddings.rows();
  if (cache.length == 0) return cache;
  if (embeddings.cols() != config.d_model) {
    throw std::invalid_argument("prompt width " + std::to_string(embeddings.cols()) +
                                " does not match d_model " + std::to_string(config.d_model));
  }
  Tape<T> tape;
  const BoundModel bound = bind_model(tape, config, model.params(), static_cast<const DomainAdapters<T>*>(nullptr), TrainableSet{});
  const PrefixNodes nodes = encode_prefix(tape, bound, tape.parameter(embeddings, false));
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    cache.keys.push_back(tape.value(nodes.keys[l]));
    cache.values.push_back(tape.value(nodes.values[l]));
  }
  return cache;
}

template <typename T>
PrefixCache<T> build_prefix_cache(const Model<T>& model, const adapt::DomainPrompt<T>& prompt) {
  if (prompt.length() > 0 && prompt.width() != model.config().d_model) {
    throw std::invalid_argument("prompt width " + std::to_string(prompt.width()) +
                                " does not match d_model " +
                                std::to_string(model.config().d_model));
  }
  if (prompt.base_fingerprint != model.fingerprint()) {
    throw FingerprintMismatch("domain prompt", model.fingerprint(), prompt.base_fingerprint);
  }
  return build_prefix_cache(model, prompt.embeddings);
}

template <typename T>
std::string generate(const Model<T>& model, const tok::Vocab& vocab, std::string_view seed_text,
                     const GenerationOptions& options, const Conditioning<T>& cond) {
  const tok::TokenSequence seed = vocab.encode(seed_text);
  if (seed.ids.empty()) throw std::invalid_argument("generate: empty seed text");
  const auto& config = model.config();
  Conditioning<T> run = cond;
  PrefixCache<T> cache;
  if (cond.prompt && !cond.adapters) {
    cache = build_prefix_cache(model, *cond.prompt);
    run.prompt = nullptr;
    run.cache = &cache;
  } else if (cond.cache && cond.cache->fingerprint != model.fingerprint()) {
    throw FingerprintMismatch("prefix cache", model.fingerprint(), cond.cache->fingerprint);
  }
  const std::size_t k = prefix_rows(run);
  const std::size_t first = config.prompt_positions ? k : 0;
  Rng rng = make_rng(options.seed, "generate");

  std::vector<tok::TokenId> inputs{tok::kBos};
  inputs.insert(inputs.end(), seed.ids.begin(), seed.ids.end());
  std::vector<tok::TokenId> generated;
  for (std::size_t step = 0; step < options.max_new; ++step) {
    if (first + inputs.size() > config.max_positions) break;
    const Matrix<T> logits = run_logits(config, model.params(), inputs, run);
    auto last = logits.row(logits.rows() - 1);
    std::vector<std::pair<double, tok::TokenId>> ranked;
    for (std::size_t id = tok::kReserved; id < last.size(); ++id) {
      ranked.emplace_back(static_cast<double>(last[id]), static_cast<tok::TokenId>(id));
    }
    tok::TokenId next;
    if (options.mode == DecodeMode::greedy) {
      // Highest logit; lowest id on ties.
      next = std::max_element(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
               return a.first < b.first || (a.first == b.first && a.second > b.second);
             })->second;
    } else {
      if (!(options.temperature > 0)) throw std::invalid_argument("generate: temperature must be positive");
      const std::size_t keep = std::clamp<std::size_t>(options.top_k, 1, ranked.size());
      std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end(),
                        [](const auto& a, const auto& b) {
                          return a.first > b.first || (a.first == b.first && a.second < b.second);
                        });
      std::vector<double> weights(keep);
      const double top = ranked[0].first;
      for (std::size_t i = 0; i < keep; ++i) {
        weights[i] = std::exp((ranked[i].first - top) / options.temperature);
      }
      std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
      next = ranked[pick(rng)].second;
    }
    generated.push_back(next);
    inputs.push_back(next);
  }
  std::string out(seed_text);
  if (!generated.empty()) out += " " + vocab.decode(generated);
  return out;
}

#define DPROMPT_INSTANTIATE_MODEL(T)                                                             \
  template class Model<T>;                                                                       \
  template Model<T> init_model<T>(const ModelConfig&);                                          \
  template Matrix<T> forward<T>(const Model<T>&, const tok::TokenSequence&,                     \
                                const Conditioning<T>&);                                         \
  template Matrix<T> forward<T>(const ModelConfig&, const Parameters<T>&,                       \
                                std::span<const tok::TokenId>, const Conditioning<T>&);         \
  template SequenceScore sequence_score<T>(const Model<T>&, const tok::TokenSequence&,          \
                                           const Conditioning<T>&);                              \
  template double corpus_perplexity<T>(const Model<T>&, std::span<const tok::TokenSequence>,    \
                                       const Conditioning<T>&);                                  \
  template PrefixCache<T> build_prefix_cache<T>(const Model<T>&, const Matrix<T>&);             \
  template PrefixCache<T> build_prefix_cache<T>(const Model<T>&, const adapt::DomainPrompt<T>&); \
  template std::string generate<T>(const Model<T>&, const tok::Vocab&, std::string_view,        \
                                   const GenerationOptions&, const Conditioning<T>&);

DPROMPT_INSTANTIATE_MODEL(float)
DPROMPT_INSTANTIATE_MODEL(double)
#undef DPROMPT_INSTANTIATE_MODEL

}  // namespace dprompt::lm
