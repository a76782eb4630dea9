#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dprompt/model/config.hpp"
#include "dprompt/model/parameters.hpp"
#include "dprompt/model/transformer.hpp"
#include "dprompt/tokenizer/vocab.hpp"
#include "dprompt/util/random.hpp"

namespace dprompt::lm {

struct TrainHyper {
  double lr = 1e-3;
  std::size_t epochs = 10;
  /// Sentences are accumulated into one step until this many target tokens are reached.
  std::size_t batch_tokens = 256;
  /// Epochs without dev improvement before stopping; 0 disables early stopping.
  std::size_t patience = 3;
  std::uint64_t seed = 0;
  /// Pretraining only: start each sentence at a random positional row.
  bool shift_positions = true;
};

struct TrainHistory {
  std::vector<double> step_losses;     // summed token NLL of each optimizer step
  std::vector<double> epoch_losses;    // mean token NLL over each epoch
  std::vector<double> dev_perplexity;  // entry 0 is before any update
  std::size_t best_epoch = 0;
  double best_dev_perplexity = 0;
  long steps = 0;
};

/// A trainable set plus the loss over one batch of sentences.
template <typename T>
class Objective {
 public:
  virtual ~Objective() = default;
  virtual std::vector<Matrix<T>*> trainables() = 0;
  /// Σ token NLL over the batch; writes one gradient per trainable, in trainables() order.
  virtual double batch_loss(std::span<const tok::TokenSequence* const> batch, Rng& dropout_rng,
                            std::vector<Matrix<T>>& grads) = 0;
  virtual double dev_perplexity(std::span<const tok::TokenSequence> dev) = 0;
};

/// Adam over the objective's trainables with shuffled, token-budgeted batches. When a dev corpus
/// is given, the trainables are left at the best-dev-perplexity snapshot (the untrained state
/// counts as a candidate) and training stops after `patience` epochs without improvement.
template <typename T>
TrainHistory train(Objective<T>& objective, std::span<const tok::TokenSequence> train_set,
                   std::span<const tok::TokenSequence> dev_set, const TrainHyper& hyper);

/// Tape nodes of a bound model in Parameters::visit order.
std::vector<NodeId> parameter_nodes(const BoundModel& bound);

/// Trains backbone tensors directly: pretraining, full fine-tuning, embedding-layer tuning.
template <typename T>
class BackboneObjective final : public Objective<T> {
 public:
  /// shift_positions starts each sentence at a random row of the positional table.
  BackboneObjective(const ModelConfig& config, Parameters<T>& params, TrainableSet trainable,
                    double dropout, bool shift_positions = false);
  std::vector<Matrix<T>*> trainables() override;
  double batch_loss(std::span<const tok::TokenSequence* const> batch, Rng& dropout_rng,
                    std::vector<Matrix<T>>& grads) override;
  double dev_perplexity(std::span<const tok::TokenSequence> dev) override;

 private:
  bool selected(TensorGroup g) const;

  const ModelConfig& config_;
  Parameters<T>& params_;
  TrainableSet trainable_;
  double dropout_;
  bool shift_positions_;
};

template <typename T>
struct PretrainResult {
  Parameters<T> params;
  TrainHistory history;
};

/// Trains every backbone tensor with dropout on. Sentences longer than max_positions − 1 tokens
/// are truncated. With hyper.shift_positions each sentence starts at a uniformly drawn position, so
/// the whole positional table is trained and not just the rows short sentences reach.
template <typename T>
PretrainResult<T> pretrain(const ModelConfig& config, Parameters<T> params,
                           std::span<const tok::TokenSequence> corpus, const TrainHyper& hyper);

/// Drops empty sequences and truncates to what fits after `prefix_rows` prompt rows and BOS.
std::vector<tok::TokenSequence> fit_to_positions(std::span<const tok::TokenSequence> corpus,
                                                 const ModelConfig& config,
                                                 std::size_t prefix_rows);

}  // namespace dprompt::lm
