#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include <json.hpp>

namespace dprompt::lm {

struct ModelConfig {
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  std::size_t d_model = 64;
  std::size_t d_ff = 256;
  std::size_t vocab_size = 2000;
  std::size_t max_positions = 128;
  double dropout = 0.1;  // pretraining and full fine-tuning only
  std::uint64_t seed = 0;
  double layer_norm_eps = 1e-5;
  /// Prompt rows take positions 0..k−1 and tokens follow from k. When false, prompt rows get no
  /// positional embedding and BOS sits at position 0.
  bool prompt_positions = true;

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;

  std::size_t head_dim() const { return d_model / n_heads; }

  /// Total parameter count, from the tensor shapes.
  std::size_t parameter_count() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace dprompt::lm
