#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "dprompt/model/adapters.hpp"
#include "dprompt/model/config.hpp"
#include "dprompt/model/parameters.hpp"
#include "dprompt/numerics/tape.hpp"
#include "dprompt/tokenizer/vocab.hpp"

namespace dprompt::lm {

using num::NodeId;
using num::Tape;

/// Which tensors become trainable leaves on the tape.
struct TrainableSet {
  bool embedding = false;
  bool transformer = false;
  bool adapters = false;
};

struct LayerNodes {
  NodeId ln1_gain, ln1_bias, q_weight, q_bias, k_weight, k_bias, v_weight, v_bias;
  NodeId out_weight, out_bias, ln2_gain, ln2_bias, fc_weight, fc_bias, fc_out_weight, fc_out_bias;
};

struct AdapterNodes {
  NodeId ln_gain, ln_bias, down_weight, down_bias, up_weight, up_bias;
};

/// Tape leaves for every backbone (and optional adapter) tensor.
struct BoundModel {
  const ModelConfig* config = nullptr;
  NodeId token_embedding, position_embedding;
  std::vector<LayerNodes> layers;
  NodeId final_gain, final_bias;
  std::vector<AdapterNodes> adapters;  // empty when no adapters are attached
};

template <typename T>
BoundModel bind_model(Tape<T>& tape, const ModelConfig& config, const Parameters<T>& params,
                      const DomainAdapters<T>* adapters, TrainableSet trainable);

/// Per-layer key/value rows of the prompt block.
struct PrefixNodes {
  std::vector<NodeId> keys, values;
  std::size_t length = 0;
};

template <typename T>
struct Dropout {
  T rate = 0;
  Rng* rng = nullptr;
};

/// Runs the prompt rows through every layer and records their keys and values. Prompt rows attend
/// to each other only.
template <typename T>
PrefixNodes encode_prefix(Tape<T>& tape, const BoundModel& model, NodeId prompt,
                          Dropout<T>* dropout = nullptr);

/// Logits (rows × V) for input ids that follow an already-encoded prefix.
template <typename T>
NodeId prefixed_logits(Tape<T>& tape, const BoundModel& model, std::span<const tok::TokenId> inputs,
                       const PrefixNodes* prefix, Dropout<T>* dropout = nullptr);

/// Logits for the token rows of one concatenated [prompt; inputs] pass. position_offset shifts
/// the positional rows used by the inputs (pretraining uses it so every row gets trained).
template <typename T>
NodeId full_logits(Tape<T>& tape, const BoundModel& model, std::optional<NodeId> prompt,
                   std::span<const tok::TokenId> inputs, Dropout<T>* dropout = nullptr,
                   std::size_t position_offset = 0);

/// [BOS, x_1, …, x_{T−1}]: the inputs whose next-token rows predict x_1…x_T.
std::vector<tok::TokenId> shifted_inputs(std::span<const tok::TokenId> tokens);

/// Throws SequenceTooLong unless prefix + BOS + tokens fit in max_positions.
void check_length(const ModelConfig& config, std::size_t prefix_rows, std::size_t tokens);

}  // namespace dprompt::lm
