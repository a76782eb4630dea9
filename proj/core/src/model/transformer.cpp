#include "dprompt/model/transformer.hpp"

#include <stdexcept>
#include <string>

#include "dprompt/util/errors.hpp"

namespace dprompt::lm {

void check_length(const ModelConfig& config, std::size_t prefix_rows, std::size_t tokens) {
  if (prefix_rows + 1 + tokens > config.max_positions) {
    throw SequenceTooLong("sequence too long: " + std::to_string(prefix_rows) + " prefix rows + BOS + " +
                          std::to_string(tokens) + " tokens exceed " +
                          std::to_string(config.max_positions) + " positions");
  }
}

std::vector<tok::TokenId> shifted_inputs(std::span<const tok::TokenId> tokens) {
  std::vector<tok::TokenId> inputs;
  inputs.reserve(tokens.size());
  inputs.push_back(tok::kBos);
  if (!tokens.empty()) inputs.insert(inputs.end(), tokens.begin(), tokens.end() - 1);
  return inputs;
}

template <typename T>
BoundModel bind_model(Tape<T>& tape, const ModelConfig& config, const Parameters<T>& params,
                      const DomainAdapters<T>* adapters, TrainableSet trainable) {
  BoundModel m;
  m.config = &config;
  const bool te = trainable.embedding, tt = trainable.transformer;
  m.token_embedding = tape.parameter(params.token_embedding, te);
  m.position_embedding = tape.parameter(params.position_embedding, tt);
  for (const auto& L : params.layers) {
    LayerNodes n;
    n.ln1_gain = tape.parameter(L.ln1_gain, tt);
    n.ln1_bias = tape.parameter(L.ln1_bias, tt);
    n.q_weight = tape.parameter(L.q_weight, tt);
    n.q_bias = tape.parameter(L.q_bias, tt);
    n.k_weight = tape.parameter(L.k_weight, tt);
    n.k_bias = tape.parameter(L.k_bias, tt);
    n.v_weight = tape.parameter(L.v_weight, tt);
    n.v_bias = tape.parameter(L.v_bias, tt);
    n.out_weight = tape.parameter(L.out_weight, tt);
    n.out_bias = tape.parameter(L.out_bias, tt);
    n.ln2_gain = tape.parameter(L.ln2_gain, tt);
    n.ln2_bias = tape.parameter(L.ln2_bias, tt);
    n.fc_weight = tape.parameter(L.fc_weight, tt);
    n.fc_bias = tape.parameter(L.fc_bias, tt);
    n.fc_out_weight = tape.parameter(L.fc_out_weight, tt);
    n.fc_out_bias = tape.parameter(L.fc_out_bias, tt);
    m.layers.push_back(n);
  }
  m.final_gain = tape.parameter(params.final_gain, tt);
  m.final_bias = tape.parameter(params.final_bias, tt);
  if (adapters) {
    if (adapters->layers.size() != params.layers.size()) {
      throw std::invalid_argument("adapter layer count does not match the model");
    }
    const bool ta = trainable.adapters;
    for (const auto& A : adapters->layers) {
      AdapterNodes n;
      n.ln_gain = tape.parameter(A.ln_gain, ta);
      n.ln_bias = tape.parameter(A.ln_bias, ta);
      n.down_weight = tape.parameter(A.down_weight, ta);
      n.down_bias = tape.parameter(A.down_bias, ta);
      n.up_weight = tape.parameter(A.up_weight, ta);
      n.up_bias = tape.parameter(A.up_bias, ta);
      m.adapters.push_back(n);
    }
  }
  return m;
}

namespace {

template <typename T>
NodeId linear(Tape<T>& t, NodeId x, NodeId w, NodeId b) {
  return t.add_row(t.matmul(x, w), b);
}

template <typename T>
NodeId maybe_dropout(Tape<T>& t, NodeId x, Dropout<T>* dp) {
  if (!dp || dp->rate <= T{0}) return x;
  return t.dropout(x, dp->rate, *dp->rng);
}

struct BlockIo {
  const NodeId* prefix_keys = nullptr;
  const NodeId* prefix_values = nullptr;
  NodeId* keys_out = nullptr;
  NodeId* values_out = nullptr;
  bool keys_only = false;
};

template <typename T>
NodeId block(Tape<T>& t, const BoundModel& m, std::size_t l, NodeId x,
             const num::AttentionShape& shape, BlockIo io, Dropout<T>* dp) {
  const LayerNodes& L = m.layers[l];
  const auto eps = static_cast<T>(m.config->layer_norm_eps);
  const NodeId h = t.layer_norm(x, L.ln1_gain, L.ln1_bias, eps);
  const NodeId k = linear(t, h, L.k_weight, L.k_bias);
  const NodeId v = linear(t, h, L.v_weight, L.v_bias);
  if (io.keys_out) *io.keys_out = k;
  if (io.values_out) *io.values_out = v;
  if (io.keys_only) return x;
  const NodeId q = linear(t, h, L.q_weight, L.q_bias);
  const NodeId keys = io.prefix_keys ? t.concat_rows(*io.prefix_keys, k) : k;
  const NodeId values = io.prefix_values ? t.concat_rows(*io.prefix_values, v) : v;
  const NodeId attn = t.attention(q, keys, values, shape);
  x = t.add(x, maybe_dropout(t, linear(t, attn, L.out_weight, L.out_bias), dp));

  const NodeId h2 = t.layer_norm(x, L.ln2_gain, L.ln2_bias, eps);
  const NodeId ff = linear(t, t.gelu(linear(t, h2, L.fc_weight, L.fc_bias)), L.fc_out_weight,
                           L.fc_out_bias);
  x = t.add(x, maybe_dropout(t, ff, dp));

  if (!m.adapters.empty()) {
    const AdapterNodes& A = m.adapters[l];
    const NodeId a = t.layer_norm(x, A.ln_gain, A.ln_bias, eps);
    const NodeId up = linear(t, t.gelu(linear(t, a, A.down_weight, A.down_bias)), A.up_weight,
                             A.up_bias);
    x = t.add(x, up);
  }
  return x;
}

template <typename T>
NodeId embed_tokens(Tape<T>& t, const BoundModel& m, std::span<const tok::TokenId> inputs,
                    std::size_t first_position) {
  const NodeId tokens = t.gather_rows(m.token_embedding, inputs);
  const NodeId positions = t.slice_rows(m.position_embedding, first_position, inputs.size());
  return t.add(tokens, positions);
}

template <typename T>
NodeId prompt_rows(Tape<T>& t, const BoundModel& m, NodeId prompt) {
  const std::size_t k = t.value(prompt).rows();
  if (t.value(prompt).cols() != m.config->d_model) {
    throw std::invalid_argument("prompt width " + std::to_string(t.value(prompt).cols()) +
                                " does not match d_model " + std::to_string(m.config->d_model));
  }
  if (!m.config->prompt_positions) return prompt;
  return t.add(prompt, t.slice_rows(m.position_embedding, 0, k));
}

template <typename T>
NodeId output_logits(Tape<T>& t, const BoundModel& m, NodeId hidden) {
  const auto eps = static_cast<T>(m.config->layer_norm_eps);
  const NodeId h = t.layer_norm(hidden, m.final_gain, m.final_bias, eps);
  // Tied output projection: logits = h · φᵀ.
  return t.matmul_transposed(h, m.token_embedding);
}

}  // namespace

template <typename T>
PrefixNodes encode_prefix(Tape<T>& t, const BoundModel& m, NodeId prompt, Dropout<T>* dp) {
  PrefixNodes out;
  out.length = t.value(prompt).rows();
  if (out.length == 0) return out;
  check_length(*m.config, out.length, 0);
  NodeId x = maybe_dropout(t, prompt_rows(t, m, prompt), dp);
  const num::AttentionShape shape{m.config->n_heads, out.length, 0};
  out.keys.resize(m.layers.size());
  out.values.resize(m.layers.size());
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    BlockIo io;
    io.keys_out = &out.keys[l];
    io.values_out = &out.values[l];
    io.keys_only = l + 1 == m.layers.size();
    x = block(t, m, l, x, shape, io, dp);
  }
  return out;
}

template <typename T>
NodeId prefixed_logits(Tape<T>& t, const BoundModel& m, std::span<const tok::TokenId> inputs,
                       const PrefixNodes* prefix, Dropout<T>* dp) {
  const std::size_t k = prefix ? prefix->length : 0;
  if (inputs.empty()) throw std::invalid_argument("prefixed_logits: no input rows");
  check_length(*m.config, k, inputs.size() - 1);
  const std::size_t first = m.config->prompt_positions ? k : 0;
  NodeId x = maybe_dropout(t, embed_tokens(t, m, inputs, first), dp);
  const num::AttentionShape shape{m.config->n_heads, k, k};
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    BlockIo io;
    if (k > 0) {
      io.prefix_keys = &prefix->keys[l];
      io.prefix_values = &prefix->values[l];
    }
    x = block(t, m, l, x, shape, io, dp);
  }
  return output_logits(t, m, x);
}

template <typename T>
NodeId full_logits(Tape<T>& t, const BoundModel& m, std::optional<NodeId> prompt,
                   std::span<const tok::TokenId> inputs, Dropout<T>* dp,
                   std::size_t position_offset) {
  const std::size_t k = prompt ? t.value(*prompt).rows() : 0;
  if (inputs.empty()) throw std::invalid_argument("full_logits: no input rows");
  check_length(*m.config, k + position_offset, inputs.size() - 1);
  const std::size_t first = (m.config->prompt_positions ? k : 0) + position_offset;
  NodeId x = embed_tokens(t, m, inputs, first);
  if (k > 0) x = t.concat_rows(prompt_rows(t, m, *prompt), x);
  x = maybe_dropout(t, x, dp);
  const num::AttentionShape shape{m.config->n_heads, k, 0};
  for (std::size_t l = 0; l < m.layers.size(); ++l) x = block(t, m, l, x, shape, BlockIo{}, dp);
  if (k > 0) x = t.slice_rows(x, k, inputs.size());
  return output_logits(t, m, x);
}

#define DPROMPT_INSTANTIATE_TRANSFORMER(T)                                                      \
  template BoundModel bind_model<T>(Tape<T>&, const ModelConfig&, const Parameters<T>&,        \
                                    const DomainAdapters<T>*, TrainableSet);                   \
  template PrefixNodes encode_prefix<T>(Tape<T>&, const BoundModel&, NodeId, Dropout<T>*);     \
  template NodeId prefixed_logits<T>(Tape<T>&, const BoundModel&,                              \
                                     std::span<const tok::TokenId>, const PrefixNodes*,        \
                                     Dropout<T>*);                                             \
  template NodeId full_logits<T>(Tape<T>&, const BoundModel&, std::optional<NodeId>,           \
                                 std::span<const tok::TokenId>, Dropout<T>*, std::size_t);

DPROMPT_INSTANTIATE_TRANSFORMER(float)
DPROMPT_INSTANTIATE_TRANSFORMER(double)
#undef DPROMPT_INSTANTIATE_TRANSFORMER

}  // namespace dprompt::lm
