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

/// Bottleneck width for reduction factor c: max(1, round(d / c)).
std::size_t bottleneck_dim(std::size_t d_model, double reduction);

/// Closed-form trainable count for one adapter per block:
/// L · (2·d (norm) + d·b + b (down) + b·d + d (up)).
std::size_t adapter_parameter_count(const ModelConfig& config, double reduction);

template <typename T>
struct AdapterLayer {
  Matrix<T> ln_gain, ln_bias;
  Matrix<T> down_weight, down_bias;  // d×b, 1×b
  Matrix<T> up_weight, up_bias;      // b×d, 1×d
};

/// One residual bottleneck per transformer block, applied after the feed-forward sub-layer:
/// h ← h + up(gelu(down(norm(h)))). The up projection starts at zero so a fresh adapter set is
/// an exact identity.
template <typename T>
struct DomainAdapters {
  double reduction = 16;
  std::size_t bottleneck = 1;
  std::string base_fingerprint;
  std::vector<AdapterLayer<T>> layers;

  template <typename Fn>
  void visit(Fn&& fn) {
    visit_impl(*this, fn);
  }
  template <typename Fn>
  void visit(Fn&& fn) const {
    visit_impl(*this, fn);
  }

  std::size_t count() const;
  std::vector<std::byte> serialize() const;
  std::string fingerprint() const;

 private:
  template <typename Self, typename Fn>
  static void visit_impl(Self& self, Fn& fn) {
    for (std::size_t l = 0; l < self.layers.size(); ++l) {
      auto& A = self.layers[l];
      const std::string p = "adapter" + std::to_string(l) + ".";
      fn(p + "ln_gain", A.ln_gain);
      fn(p + "ln_bias", A.ln_bias);
      fn(p + "down_weight", A.down_weight);
      fn(p + "down_bias", A.down_bias);
      fn(p + "up_weight", A.up_weight);
      fn(p + "up_bias", A.up_bias);
    }
  }
};

template <typename T>
DomainAdapters<T> init_adapters(const ModelConfig& config, double reduction,
                                const std::string& base_fingerprint, std::uint64_t seed);

/// Adapter blob file: one JSON header line, then the tensors as little-endian binary32.
template <typename T>
void save_adapters(const std::string& path, const DomainAdapters<T>& adapters);
template <typename T>
DomainAdapters<T> load_adapters(const std::string& path, const ModelConfig& config);

}  // namespace dprompt::lm
