#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dprompt/adaptation/prompt.hpp"
#include "dprompt/model/adapters.hpp"
#include "dprompt/model/config.hpp"
#include "dprompt/model/training.hpp"

namespace dprompt::adapt {

enum class Method {
  none,              // out-of-the-box backbone, no domain data
  prompt,            // learned domain prompt of k rows
  domain_embedding,  // a single learned domain-token vector (k = 1)
  fixed_prompt,      // embeddings of the most frequent domain words, no training
  embedding,         // token-embedding matrix φ only
  adapter,           // bottleneck adapters after each block
  full,              // every backbone parameter
};

std::string_view to_string(Method m);
/// Accepts the names printed by to_string plus common spellings ("no-adaptation",
/// "domain-prompts", "prompt-designing", "fine-tuning", ...). Throws on anything else.
Method parse_method(std::string_view name);

/// A method with its size knob.
struct MethodSpec {
  Method method = Method::prompt;
  std::size_t k = 50;           // prompt rows (prompt), words (fixed_prompt)
  PromptInit init = PromptInit::vocab;
  double reduction = 16;        // adapter reduction factor c

  std::string label() const;
};

/// Domain-specific trainable parameter count for a method on a given backbone shape.
std::size_t count_trainable(const MethodSpec& spec, const lm::ModelConfig& config);

struct AdaptJob {
  std::string domain;
  MethodSpec spec;
  lm::TrainHyper hyper;
  std::vector<double> lr_grid;  // empty → the method's default grid
};

/// Default learning-rate grid for a method: {1e-1, 1e-2, 1e-3} for prompt-style methods,
/// {1e-3, 1e-4} for backbone and adapter training.
std::vector<double> default_lr_grid(Method m);

/// Word list whose embeddings prefix every hypothesis at scoring time.
struct FixedPrompt {
  std::vector<std::string> words;
};

template <typename T>
using Artifact = std::variant<std::monostate, DomainPrompt<T>, FixedPrompt, lm::DomainAdapters<T>,
                              lm::Parameters<T>>;

template <typename T>
struct AdaptResult {
  Artifact<T> artifact;
  lm::TrainHistory history;
  double selected_lr = 0;
  double dev_perplexity = 0;
  std::size_t trainable = 0;
};

/// Trains (or, for none/fixed_prompt, just assembles) the artifact for one method. Dropout is on
/// only for full fine-tuning. Prompt and domain-embedding jobs run through train_prompt; a
/// domain embedding is a k = 1 prompt.
template <typename T>
AdaptResult<T> train_baseline(const lm::Model<T>& model, const tok::Vocab& vocab,
                              std::span<const std::string> train_text,
                              std::span<const tok::TokenSequence> train,
                              std::span<const tok::TokenSequence> dev, const AdaptJob& job);

/// Adapter weights are the only trainable leaves; the backbone is bound frozen.
template <typename T>
class AdapterObjective final : public lm::Objective<T> {
 public:
  AdapterObjective(const lm::Model<T>& model, lm::DomainAdapters<T>& adapters);
  std::vector<Matrix<T>*> trainables() override;
  double batch_loss(std::span<const tok::TokenSequence* const> batch, Rng& dropout_rng,
                    std::vector<Matrix<T>>& grads) override;
  double dev_perplexity(std::span<const tok::TokenSequence> dev) override;

 private:
  const lm::Model<T>& model_;
  lm::DomainAdapters<T>& adapters_;
};

}  // namespace dprompt::adapt
