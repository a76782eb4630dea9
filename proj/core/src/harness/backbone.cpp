#include "dprompt/harness/backbone.hpp"

namespace dprompt::harness {

template <typename T>
Backbone<T> pretrain_backbone(std::span<const std::string> lines, lm::ModelConfig config,
                              const lm::TrainHyper& hyper) {
  auto vocab = tok::Vocab::build(lines, config.vocab_size);
  config.vocab_size = vocab.size();
  config.validate();
  std::vector<tok::TokenSequence> corpus;
  corpus.reserve(lines.size());
  for (const auto& l : lines) corpus.push_back(vocab.encode(l));
  auto trained = lm::pretrain(config, lm::init_parameters<T>(config), corpus, hyper);
  return Backbone<T>{lm::Checkpoint<T>{lm::Model<T>(config, std::move(trained.params)), std::move(vocab)},
                     std::move(trained.history)};
}

template Backbone<float> pretrain_backbone<float>(std::span<const std::string>, lm::ModelConfig,
                                                  const lm::TrainHyper&);
template Backbone<double> pretrain_backbone<double>(std::span<const std::string>, lm::ModelConfig,
                                                    const lm::TrainHyper&);

}  // namespace dprompt::harness
