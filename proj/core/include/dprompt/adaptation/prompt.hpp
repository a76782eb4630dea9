#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dprompt/adaptation/domain_prompt.hpp"
#include "dprompt/model/model.hpp"
#include "dprompt/model/training.hpp"
#include "dprompt/tokenizer/vocab.hpp"

namespace dprompt::adapt {

using lm::Model;
using lm::TrainHistory;
using lm::TrainHyper;
using num::Matrix;

/// Untrained prompt. Vocab mode copies the embedding rows of top_k_frequent(corpus, k); random
/// mode draws N(0, 0.02²) from the seed.
template <typename T>
DomainPrompt<T> init_prompt(PromptInit mode, std::size_t k, const Model<T>& model,
                            const tok::Vocab& vocab, std::span<const std::string> domain_corpus,
                            std::uint64_t seed, std::string domain = {});

/// Embedding rows for a fixed token list (the prompt-designing baseline).
template <typename T>
Matrix<T> embeddings_for(const Model<T>& model, const tok::Vocab& vocab,
                         std::span<const std::string> tokens);

/// Sentence-level next-token loss with only the prompt trainable. Each batch encodes the prompt
/// once and shares its per-layer keys and values across every sentence in the batch.
template <typename T>
class PromptObjective final : public lm::Objective<T> {
 public:
  PromptObjective(const Model<T>& model, Matrix<T> prompt);

  std::vector<Matrix<T>*> trainables() override { return {&prompt_}; }
  double batch_loss(std::span<const tok::TokenSequence* const> batch, Rng& dropout_rng,
                    std::vector<Matrix<T>>& grads) override;
  double dev_perplexity(std::span<const tok::TokenSequence> dev) override;

  const Matrix<T>& prompt() const noexcept { return prompt_; }

 private:
  const Model<T>& model_;
  Matrix<T> prompt_;
};

/// Σ over sentences of Σ_t −log p(x_t | prompt, BOS, x_<t), evaluated through the same batched
/// graph the trainer differentiates.
template <typename T>
double prompt_corpus_loss(const Model<T>& model, const Matrix<T>& prompt,
                          std::span<const tok::TokenSequence> corpus, std::size_t batch_tokens = 256);

struct PromptJob {
  std::string domain;
  std::size_t k = 50;
  PromptInit init = PromptInit::vocab;
  TrainHyper hyper;
  std::vector<double> lr_grid{1e-1, 1e-2, 1e-3};
};

template <typename T>
struct PromptResult {
  DomainPrompt<T> prompt;
  TrainHistory history;       // of the selected learning rate
  double selected_lr = 0;
  std::vector<double> grid_dev_perplexity;  // best dev perplexity per grid entry
};

/// Learns a k-row prompt against a frozen backbone. Every grid entry starts from the same
/// initialization; the entry with the lowest dev perplexity wins (first on ties).
/// `train_text` feeds vocab initialization; `train`/`dev` are the encoded splits.
template <typename T>
PromptResult<T> train_prompt(const Model<T>& model, const tok::Vocab& vocab,
                             std::span<const std::string> train_text,
                             std::span<const tok::TokenSequence> train,
                             std::span<const tok::TokenSequence> dev, const PromptJob& job);

/// .dpmt: one JSON header line {domain, k, d, base_fingerprint, init, seed, steps,
/// dev_perplexity, fingerprint}, then the k×d matrix as little-endian binary32.
template <typename T>
void save_prompt(const std::filesystem::path& path, const DomainPrompt<T>& prompt);
template <typename T>
DomainPrompt<T> load_prompt(const std::filesystem::path& path);

/// SHA-256 of the prompt's binary32 matrix bytes.
template <typename T>
std::string prompt_fingerprint(const DomainPrompt<T>& prompt);

}  // namespace dprompt::adapt
