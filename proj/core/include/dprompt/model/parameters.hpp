#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dprompt/model/config.hpp"
#include "dprompt/numerics/matrix.hpp"

namespace dprompt::lm {

using num::Matrix;

/// Which half of the backbone a tensor belongs to. The token embedding (φ) doubles as the output
/// projection; everything else, positional embeddings included, is transformer state (θ).
enum class TensorGroup { embedding, transformer };

template <typename T>
struct LayerParameters {
  Matrix<T> ln1_gain, ln1_bias;
  Matrix<T> q_weight, q_bias, k_weight, k_bias, v_weight, v_bias;
  Matrix<T> out_weight, out_bias;
  Matrix<T> ln2_gain, ln2_bias;
  Matrix<T> fc_weight, fc_bias, fc_out_weight, fc_out_bias;

  friend bool operator==(const LayerParameters&, const LayerParameters&) = default;
};

/// Backbone weights. Linear weights are stored input-major (y = x·W + b).
///
/// Serialization order (also the visit order):
///   token_embedding V×d, position_embedding P×d,
///   per layer: ln1_gain, ln1_bias, q_weight, q_bias, k_weight, k_bias, v_weight, v_bias,
///              out_weight, out_bias, ln2_gain, ln2_bias, fc_weight d×d_ff, fc_bias,
///              fc_out_weight d_ff×d, fc_out_bias,
///   final_gain, final_bias.
template <typename T>
struct Parameters {
  Matrix<T> token_embedding;
  Matrix<T> position_embedding;
  std::vector<LayerParameters<T>> layers;
  Matrix<T> final_gain, final_bias;

  template <typename Fn>
  void visit(Fn&& fn) {
    visit_impl(*this, fn);
  }
  template <typename Fn>
  void visit(Fn&& fn) const {
    visit_impl(*this, fn);
  }

  std::size_t count() const;
  /// Every tensor in visit order as little-endian binary32.
  std::vector<std::byte> serialize() const;
  /// Only tensors of one group, in visit order.
  std::vector<std::byte> serialize(TensorGroup group) const;
  static Parameters deserialize(const ModelConfig& config, std::span<const std::byte> blob);

  friend bool operator==(const Parameters&, const Parameters&) = default;

 private:
  template <typename Self, typename Fn>
  static void visit_impl(Self& self, Fn& fn) {
    fn("token_embedding", self.token_embedding, TensorGroup::embedding);
    fn("position_embedding", self.position_embedding, TensorGroup::transformer);
    for (std::size_t l = 0; l < self.layers.size(); ++l) {
      auto& L = self.layers[l];
      const std::string p = "layer" + std::to_string(l) + ".";
      const auto g = TensorGroup::transformer;
      fn(p + "ln1_gain", L.ln1_gain, g);
      fn(p + "ln1_bias", L.ln1_bias, g);
      fn(p + "q_weight", L.q_weight, g);
      fn(p + "q_bias", L.q_bias, g);
      fn(p + "k_weight", L.k_weight, g);
      fn(p + "k_bias", L.k_bias, g);
      fn(p + "v_weight", L.v_weight, g);
      fn(p + "v_bias", L.v_bias, g);
      fn(p + "out_weight", L.out_weight, g);
      fn(p + "out_bias", L.out_bias, g);
      fn(p + "ln2_gain", L.ln2_gain, g);
      fn(p + "ln2_bias", L.ln2_bias, g);
      fn(p + "fc_weight", L.fc_weight, g);
      fn(p + "fc_bias", L.fc_bias, g);
      fn(p + "fc_out_weight", L.fc_out_weight, g);
      fn(p + "fc_out_bias", L.fc_out_bias, g);
    }
    fn("final_gain", self.final_gain, TensorGroup::transformer);
    fn("final_bias", self.final_bias, TensorGroup::transformer);
  }
};

/// Weights ~ N(0, 0.02²), norms at gain 1 / bias 0, biases 0. Deterministic in config.seed.
template <typename T>
Parameters<T> init_parameters(const ModelConfig& config);

/// Zero-filled tensors with the shapes the config implies.
template <typename T>
Parameters<T> zero_parameters(const ModelConfig& config);

/// SHA-256 of the serialized binary32 blob.
template <typename T>
std::string fingerprint(const Parameters<T>& params);

/// SHA-256 over the native-precision bytes of one group; detects changes smaller than binary32
/// rounding when T is double.
template <typename T>
std::string group_hash(const Parameters<T>& params, TensorGroup group);

extern template struct Parameters<float>;
extern template struct Parameters<double>;

}  // namespace dprompt::lm
