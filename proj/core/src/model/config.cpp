#include "dprompt/model/config.hpp"

#include <stdexcept>

#include "dprompt/tokenizer/vocab.hpp"

namespace dprompt::lm {

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("ModelConfig: " + msg); };
  if (n_layers < 1) fail("n_layers must be at least 1");
  if (n_heads < 1) fail("n_heads must be at least 1");
  if (d_model < 1) fail("d_model must be at least 1");
  if (d_ff < 1) fail("d_ff must be at least 1");
  if (max_positions < 2) fail("max_positions must be at least 2");
  if (vocab_size <= tok::kReserved) fail("vocab_size must exceed the reserved entries");
  if (d_model % n_heads != 0) {
    fail("d_model " + std::to_string(d_model) + " not divisible by n_heads " +
         std::to_string(n_heads));
  }
  if (dropout < 0.0 || dropout >= 1.0) fail("dropout must be in [0, 1)");
  if (!(layer_norm_eps > 0.0)) fail("layer_norm_eps must be positive");
}

std::size_t ModelConfig::parameter_count() const {
  const std::size_t d = d_model, f = d_ff;
  const std::size_t per_layer = 4 * d * d + 2 * d * f + 9 * d + f;
  return vocab_size * d + max_positions * d + n_layers * per_layer + 2 * d;
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"n_layers", c.n_layers},
                     {"n_heads", c.n_heads},
                     {"d_model", c.d_model},
                     {"d_ff", c.d_ff},
                     {"vocab_size", c.vocab_size},
                     {"max_positions", c.max_positions},
                     {"dropout", c.dropout},
                     {"seed", c.seed},
                     {"layer_norm_eps", c.layer_norm_eps},
                     {"prompt_positions", c.prompt_positions}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.n_layers = j.value("n_layers", d.n_layers);
  c.n_heads = j.value("n_heads", d.n_heads);
  c.d_model = j.value("d_model", d.d_model);
  c.d_ff = j.value("d_ff", d.d_ff);
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.max_positions = j.value("max_positions", d.max_positions);
  c.dropout = j.value("dropout", d.dropout);
  c.seed = j.value("seed", d.seed);
  c.layer_norm_eps = j.value("layer_norm_eps", d.layer_norm_eps);
  c.prompt_positions = j.value("prompt_positions", d.prompt_positions);
}

}  // namespace dprompt::lm
