#pragma once

#include <span>
#include <string>

#include "dprompt/model/checkpoint.hpp"
#include "dprompt/model/training.hpp"

namespace dprompt::harness {

template <typename T>
struct Backbone {
  lm::Checkpoint<T> checkpoint;
  lm::TrainHistory history;
};

/// Builds a vocabulary of at most config.vocab_size entries from the text, shrinks the vocab
/// size to what the text supports, then pretrains a freshly initialized model on it.
template <typename T>
Backbone<T> pretrain_backbone(std::span<const std::string> lines, lm::ModelConfig config,
                              const lm::TrainHyper& hyper);

}  // namespace dprompt::harness
