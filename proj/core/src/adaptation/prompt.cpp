#include "dprompt/adaptation/prompt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "dprompt/model/transformer.hpp"
#include "dprompt/util/binary_io.hpp"
#include "dprompt/util/errors.hpp"
#include "dprompt/util/sha256.hpp"

namespace dprompt::adapt {

template <typename T>
Matrix<T> embeddings_for(const Model<T>& model, const tok::Vocab& vocab,
                         std::span<const std::string> tokens) {
  const auto& phi = model.params().token_embedding;
  Matrix<T> out(tokens.size(), phi.cols());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto id = static_cast<std::size_t>(vocab.id(tokens[i]));
    auto src = phi.row(id);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

template <typename T>
DomainPrompt<T> init_prompt(PromptInit mode, std::size_t k, const Model<T>& model,
                            const tok::Vocab& vocab, std::span<const std::string> domain_corpus,
                            std::uint64_t seed, std::string domain) {
  if (k == 0) throw std::invalid_argument("init_prompt: k must be at least 1");
  DomainPrompt<T> p;
  p.domain = std::move(domain);
  p.init = mode;
  p.seed = seed;
  p.base_fingerprint = model.fingerprint();
  if (mode == PromptInit::vocab) {
    const auto words = tok::top_k_frequent(domain_corpus, k);
    p.embeddings = embeddings_for(model, vocab, words);
  } else {
    p.embeddings = Matrix<T>(k, model.config().d_model);
    Rng rng = make_rng(seed, "prompt-init");
    std::normal_distribution<double> normal(0.0, 0.02);
    for (auto& x : p.embeddings.values()) x = static_cast<T>(normal(rng));
  }
  return p;
}

template <typename T>
PromptObjective<T>::PromptObjective(const Model<T>& model, Matrix<T> prompt)
    : model_(model), prompt_(std::move(prompt)) {
  if (prompt_.rows() == 0) throw std::invalid_argument("PromptObjective: empty prompt");
  if (prompt_.cols() != model.config().d_model) {
    throw std::invalid_argument("PromptObjective: prompt width does not match d_model");
  }
}

template <typename T>
double PromptObjective<T>::batch_loss(std::span<const tok::TokenSequence* const> batch, Rng&,
                                      std::vector<Matrix<T>>& grads) {
  lm::Tape<T> tape;
  const auto bound = lm::bind_model(tape, model_.config(), model_.params(),
                                    static_cast<const lm::DomainAdapters<T>*>(nullptr),
                                    lm::TrainableSet{});
  const lm::NodeId prompt = tape.parameter(prompt_, true);
  const lm::PrefixNodes prefix = lm::encode_prefix(tape, bound, prompt);
  std::optional<lm::NodeId> total;
  for (const auto* seq : batch) {
    const auto inputs = lm::shifted_inputs(seq->ids);
    const lm::NodeId logits = lm::prefixed_logits(tape, bound, inputs, &prefix);
    const lm::NodeId loss = tape.nll(logits, seq->ids);
    total = total ? tape.add(*total, loss) : loss;
  }
  tape.backward(*total);
  grads.assign(1, tape.grad(prompt));
  return static_cast<double>(tape.value(*total)(0, 0));
}

template <typename T>
double PromptObjective<T>::dev_perplexity(std::span<const tok::TokenSequence> dev) {
  const auto cache = lm::build_prefix_cache(model_, prompt_);
  lm::Conditioning<T> cond;
  cond.cache = &cache;
  return lm::corpus_perplexity(model_, dev, cond);
}

template <typename T>
double prompt_corpus_loss(const Model<T>& model, const Matrix<T>& prompt,
                          std::span<const tok::TokenSequence> corpus, std::size_t batch_tokens) {
  PromptObjective<T> objective(model, prompt);
  Rng unused(0);
  std::vector<Matrix<T>> grads;
  double total = 0;
  std::size_t i = 0;
  while (i < corpus.size()) {
    std::vector<const tok::TokenSequence*> batch;
    std::size_t tokens = 0;
    while (i < corpus.size() && (batch.empty() || tokens + corpus[i].ids.size() <= batch_tokens)) {
      tokens += corpus[i].ids.size();
      batch.push_back(&corpus[i++]);
    }
    total += objective.batch_loss(batch, unused, grads);
  }
  return total;
}

template <typename T>
PromptResult<T> train_prompt(const Model<T>& model, const tok::Vocab& vocab,
                             std::span<const std::string> train_text,
                             std::span<const tok::TokenSequence> train,
                             std::span<const tok::TokenSequence> dev, const PromptJob& job) {
  if (job.k == 0) throw std::invalid_argument("train_prompt: k must be at least 1");
  if (train.empty()) throw std::invalid_argument("train_prompt: empty training corpus");
  if (job.lr_grid.empty()) throw std::invalid_argument("train_prompt: empty learning-rate grid");
  if (job.lr_grid.size() > 1 && dev.empty()) {
    throw std::invalid_argument("train_prompt: selecting over a grid needs a dev corpus");
  }
  std::size_t longest = 0;
  for (const auto& s : train) longest = std::max(longest, s.ids.size());
  for (const auto& s : dev) longest = std::max(longest, s.ids.size());
  lm::check_length(model.config(), job.k, longest);

  const DomainPrompt<T> start =
      init_prompt(job.init, job.k, model, vocab, train_text, job.hyper.seed, job.domain);

  PromptResult<T> best;
  double best_score = 0;
  for (double lr : job.lr_grid) {
    PromptObjective<T> objective(model, start.embeddings);
    TrainHyper hyper = job.hyper;
    hyper.lr = lr;
    TrainHistory history = lm::train(objective, train, dev, hyper);
    // Without a dev split the single grid entry is scored by its last training loss.
    const double score = !dev.empty()                  ? history.best_dev_perplexity
                         : history.epoch_losses.empty() ? 0.0
                                                        : history.epoch_losses.back();
    best.grid_dev_perplexity.push_back(score);
    if (best.grid_dev_perplexity.size() == 1 || score < best_score) {
      best_score = score;
      best.prompt = start;
      best.prompt.embeddings = objective.prompt();
      best.prompt.steps = history.steps;
      best.prompt.dev_perplexity = history.best_dev_perplexity;
      best.history = std::move(history);
      best.selected_lr = lr;
    }
  }
  return best;
}

template <typename T>
std::string prompt_fingerprint(const DomainPrompt<T>& prompt) {
  std::vector<std::byte> blob;
  append_f32_le(blob, prompt.embeddings.values());
  return sha256_hex(blob);
}

template <typename T>
void save_prompt(const std::filesystem::path& path, const DomainPrompt<T>& prompt) {
  nlohmann::json header{{"format", "dpmt"},
                        {"version", 1},
                        {"domain", prompt.domain},
                        {"k", prompt.length()},
                        {"d", prompt.width()},
                        {"base_fingerprint", prompt.base_fingerprint},
                        {"init", to_string(prompt.init)},
                        {"seed", prompt.seed},
                        {"steps", prompt.steps},
                        {"dev_perplexity", prompt.dev_perplexity},
                        {"fingerprint", prompt_fingerprint(prompt)}};
  const std::string head = header.dump() + "\n";
  std::vector<std::byte> bytes(head.size());
  std::memcpy(bytes.data(), head.data(), head.size());
  append_f32_le(bytes, prompt.embeddings.values());
  write_file_bytes(path.string(), bytes);
}

template <typename T>
DomainPrompt<T> load_prompt(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path.string());
  std::size_t nl = 0;
  while (nl < bytes.size() && bytes[nl] != std::byte{'\n'}) ++nl;
  if (nl == bytes.size()) throw std::runtime_error(path.string() + ": missing .dpmt header");
  const auto header =
      nlohmann::json::parse(std::string(reinterpret_cast<const char*>(bytes.data()), nl));
  if (header.value("format", "") != "dpmt") {
    throw std::runtime_error(path.string() + ": not a .dpmt file");
  }
  DomainPrompt<T> p;
  p.domain = header.value("domain", "");
  const auto k = header.at("k").get<std::size_t>();
  const auto d = header.at("d").get<std::size_t>();
  p.base_fingerprint = header.at("base_fingerprint").get<std::string>();
  p.init = header.value("init", "vocab") == "random" ? PromptInit::random : PromptInit::vocab;
  p.seed = header.value("seed", std::uint64_t{0});
  p.steps = header.value("steps", 0L);
  p.dev_perplexity = header.value("dev_perplexity", 0.0);
  if (bytes.size() != nl + 1 + k * d * 4) {
    throw std::runtime_error(path.string() + ": matrix size does not match k x d in header");
  }
  p.embeddings = Matrix<T>(k, d, read_f32_le<T>(bytes, nl + 1, k * d));
  if (header.contains("fingerprint") && header["fingerprint"] != prompt_fingerprint(p)) {
    throw FingerprintMismatch(".dpmt payload", header["fingerprint"].get<std::string>(),
                              prompt_fingerprint(p));
  }
  return p;
}

#define DPROMPT_INSTANTIATE_PROMPT(T)                                                           \
  template DomainPrompt<T> init_prompt<T>(PromptInit, std::size_t, const Model<T>&,            \
                                          const tok::Vocab&, std::span<const std::string>,     \
                                          std::uint64_t, std::string);                         \
  template Matrix<T> embeddings_for<T>(const Model<T>&, const tok::Vocab&,                     \
                                       std::span<const std::string>);                          \
  template class PromptObjective<T>;                                                            \
  template double prompt_corpus_loss<T>(const Model<T>&, const Matrix<T>&,                     \
                                        std::span<const tok::TokenSequence>, std::size_t);     \
  template PromptResult<T> train_prompt<T>(const Model<T>&, const tok::Vocab&,                 \
                                           std::span<const std::string>,                       \
                                           std::span<const tok::TokenSequence>,                \
                                           std::span<const tok::TokenSequence>,                \
                                           const PromptJob&);                                   \
  template std::string prompt_fingerprint<T>(const DomainPrompt<T>&);                          \
  template void save_prompt<T>(const std::filesystem::path&, const DomainPrompt<T>&);          \
  template DomainPrompt<T> load_prompt<T>(const std::filesystem::path&);

DPROMPT_INSTANTIATE_PROMPT(float)
DPROMPT_INSTANTIATE_PROMPT(double)
#undef DPROMPT_INSTANTIATE_PROMPT

}  // namespace dprompt::adapt
