#include "dprompt/adaptation/baselines.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "dprompt/model/transformer.hpp"

namespace dprompt::adapt {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::none: return "no-adaptation";
    case Method::prompt: return "domain-prompt";
    case Method::domain_embedding: return "domain-embedding";
    case Method::fixed_prompt: return "prompt-designing";
    case Method::embedding: return "embedding-layer";
    case Method::adapter: return "adapter";
    case Method::full: return "full-fine-tuning";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  std::string n;
  for (char c : name) n.push_back(c == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (n == "none" || n == "no-adaptation" || n == "unadapted") return Method::none;
  if (n == "prompt" || n == "domain-prompt" || n == "domain-prompts") return Method::prompt;
  if (n == "domain-embedding") return Method::domain_embedding;
  if (n == "fixed-prompt" || n == "prompt-designing") return Method::fixed_prompt;
  if (n == "embedding" || n == "embedding-layer" || n == "tuning-embedding-layer") {
    return Method::embedding;
  }
  if (n == "adapter" || n == "adapters" || n == "domain-adapter") return Method::adapter;
  if (n == "full" || n == "full-fine-tuning" || n == "fine-tuning") return Method::full;
  throw std::invalid_argument("unknown adaptation method '" + std::string(name) + "'");
}

std::string MethodSpec::label() const {
  switch (method) {
    case Method::prompt:
      return "domain-prompt (k=" + std::to_string(k) + ", " + to_string(init) + " init)";
    case Method::fixed_prompt:
      return "prompt-designing (" + std::to_string(k) + " words)";
    case Method::adapter: {
      const double r = reduction;
      const bool whole = std::floor(r) == r;
      return "adapter (c=" + (whole ? std::to_string(static_cast<long long>(r)) : std::to_string(r)) + ")";
    }
    default:
      return std::string(to_string(method));
  }
}

std::size_t count_trainable(const MethodSpec& spec, const lm::ModelConfig& c) {
  switch (spec.method) {
    case Method::none:
    case Method::fixed_prompt: return 0;
    case Method::prompt: return spec.k * c.d_model;
    case Method::domain_embedding: return c.d_model;
    case Method::embedding: return c.vocab_size * c.d_model;
    case Method::full: return c.parameter_count();
    case Method::adapter: return lm::adapter_parameter_count(c, spec.reduction);
  }
  return 0;
}

std::vector<double> default_lr_grid(Method m) {
  switch (m) {
    case Method::prompt:
    case Method::domain_embedding: return {1e-1, 1e-2, 1e-3};
    case Method::embedding:
    case Method::adapter:
    case Method::full: return {1e-3, 1e-4};
    default: return {};
  }
}

template <typename T>
AdapterObjective<T>::AdapterObjective(const lm::Model<T>& model, lm::DomainAdapters<T>& adapters)
    : model_(model), adapters_(adapters) {}

template <typename T>
std::vector<Matrix<T>*> AdapterObjective<T>::trainables() {
  std::vector<Matrix<T>*> out;
  adapters_.visit([&](const std::string&, Matrix<T>& m) { out.push_back(&m); });
  return out;
}

template <typename T>
double AdapterObjective<T>::batch_loss(std::span<const tok::TokenSequence* const> batch, Rng&,
                                       std::vector<Matrix<T>>& grads) {
  lm::Tape<T> tape;
  const auto bound = lm::bind_model(tape, model_.config(), model_.params(), &adapters_,
                                    lm::TrainableSet{false, false, true});
  std::optional<lm::NodeId> total;
  for (const auto* seq : batch) {
    const auto inputs = lm::shifted_inputs(seq->ids);
    const auto logits = lm::full_logits(tape, bound, std::nullopt, inputs);
    const auto loss = tape.nll(logits, seq->ids);
    total = total ? tape.add(*total, loss) : loss;
  }
  tape.backward(*total);
  grads.clear();
  for (const auto& a : bound.adapters) {
    for (auto id : {a.ln_gain, a.ln_bias, a.down_weight, a.down_bias, a.up_weight, a.up_bias}) {
      grads.push_back(tape.grad(id));
    }
  }
  return static_cast<double>(tape.value(*total)(0, 0));
}

template <typename T>
double AdapterObjective<T>::dev_perplexity(std::span<const tok::TokenSequence> dev) {
  lm::Conditioning<T> cond;
  cond.adapters = &adapters_;
  return lm::corpus_perplexity(model_, dev, cond);
}

namespace {

template <typename T>
struct GridOutcome {
  Artifact<T> artifact;
  lm::TrainHistory history;
};

template <typename T>
void run_grid(const std::vector<double>& grid, const lm::TrainHyper& base,
              bool have_dev, const std::function<GridOutcome<T>(const lm::TrainHyper&)>& run,
              AdaptResult<T>& result) {
  if (grid.empty()) throw std::invalid_argument("train_baseline: empty learning-rate grid");
  if (grid.size() > 1 && !have_dev) {
    throw std::invalid_argument("train_baseline: selecting over a grid needs a dev corpus");
  }
  bool first = true;
  double best = 0;
  for (double lr : grid) {
    lm::TrainHyper h = base;
    h.lr = lr;
    GridOutcome<T> out = run(h);
    const double score = have_dev                      ? out.history.best_dev_perplexity
                         : out.history.epoch_losses.empty() ? 0.0
                                                             : out.history.epoch_losses.back();
    if (first || score < best) {
      first = false;
      best = score;
      result.artifact = std::move(out.artifact);
      result.history = std::move(out.history);
      result.selected_lr = lr;
      result.dev_perplexity = result.history.best_dev_perplexity;
    }
  }
}

}  // namespace

template <typename T>
AdaptResult<T> train_baseline(const lm::Model<T>& model, const tok::Vocab& vocab,
                              std::span<const std::string> train_text,
                              std::span<const tok::TokenSequence> train,
                              std::span<const tok::TokenSequence> dev, const AdaptJob& job) {
  const auto& config = model.config();
  AdaptResult<T> result;
  result.trainable = count_trainable(job.spec, config);
  const auto grid = job.lr_grid.empty() ? default_lr_grid(job.spec.method) : job.lr_grid;
  const bool have_dev = !dev.empty();

  switch (job.spec.method) {
    case Method::none: {
      if (have_dev) result.dev_perplexity = lm::corpus_perplexity(model, dev);
      return result;
    }
    case Method::prompt:
    case Method::domain_embedding: {
      PromptJob pj;
      pj.domain = job.domain;
      pj.k = job.spec.method == Method::domain_embedding ? 1 : job.spec.k;
      pj.init = job.spec.init;
      pj.hyper = job.hyper;
      pj.lr_grid = grid;
      auto pr = train_prompt(model, vocab, train_text, train, dev, pj);
      result.dev_perplexity = pr.prompt.dev_perplexity;
      result.selected_lr = pr.selected_lr;
      result.history = std::move(pr.history);
      result.artifact = std::move(pr.prompt);
      return result;
    }
    case Method::fixed_prompt: {
      FixedPrompt fp{tok::top_k_frequent(train_text, job.spec.k)};
      if (have_dev) {
        const auto emb = embeddings_for(model, vocab, fp.words);
        lm::Conditioning<T> cond;
        cond.prompt = &emb;
        result.dev_perplexity = lm::corpus_perplexity(model, dev, cond);
      }
      result.artifact = std::move(fp);
      return result;
    }
    case Method::embedding:
    case Method::full: {
      const bool full = job.spec.method == Method::full;
      const auto fitted = lm::fit_to_positions(train, config, 0);
      run_grid<T>(grid, job.hyper, have_dev,
                  [&](const lm::TrainHyper& h) {
                    lm::Parameters<T> params = model.params();
                    lm::BackboneObjective<T> objective(config, params,
                                                       lm::TrainableSet{true, full, false},
                                                       full ? config.dropout : 0.0);
                    auto history = lm::train(objective, std::span<const tok::TokenSequence>(fitted), dev, h);
                    return GridOutcome<T>{std::move(params), std::move(history)};
                  },
                  result);
      return result;
    }
    case Method::adapter: {
      const auto fitted = lm::fit_to_positions(train, config, 0);
      run_grid<T>(grid, job.hyper, have_dev,
                  [&](const lm::TrainHyper& h) {
                    auto adapters = lm::init_adapters<T>(config, job.spec.reduction,
                                                         model.fingerprint(), h.seed);
                    AdapterObjective<T> objective(model, adapters);
                    auto history = lm::train(objective, std::span<const tok::TokenSequence>(fitted), dev, h);
                    return GridOutcome<T>{std::move(adapters), std::move(history)};
                  },
                  result);
      return result;
    }
  }
  throw std::invalid_argument("train_baseline: unknown method");
}

template class AdapterObjective<float>;
template class AdapterObjective<double>;
#define DPROMPT_INSTANTIATE_BASELINE(T)                                                        \
  template AdaptResult<T> train_baseline<T>(const lm::Model<T>&, const tok::Vocab&,           \
                                            std::span<const std::string>,                     \
                                            std::span<const tok::TokenSequence>,              \
                                            std::span<const tok::TokenSequence>,              \
                                            const AdaptJob&);
DPROMPT_INSTANTIATE_BASELINE(float)
DPROMPT_INSTANTIATE_BASELINE(double)
#undef DPROMPT_INSTANTIATE_BASELINE

}  // namespace dprompt::adapt
