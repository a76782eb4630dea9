#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "dprompt/numerics/matrix.hpp"
#include "dprompt/numerics/ops.hpp"
#include "dprompt/util/random.hpp"

namespace dprompt::num {

struct NodeId {
  std::uint32_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
};

/// Records primitive applications in evaluation order and replays them in reverse to produce
/// gradients. Only leaves registered as trainable (and nodes that depend on them) carry gradient
/// storage; everything else is skipped during the reverse sweep.
///
/// Parameter leaves are non-owning: the referenced matrices must outlive the tape.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(Tape&&) noexcept = default;

  NodeId parameter(const Matrix<T>& value, bool trainable);
  NodeId constant(Matrix<T> value);

  const Matrix<T>& value(NodeId id) const;
  bool requires_grad(NodeId id) const { return nodes_.at(id.index).needs_grad; }
  /// Gradient of the last backward() loss w.r.t. a trainable leaf or one of its dependents.
  /// Throws std::logic_error for nodes outside the trainable set.
  const Matrix<T>& grad(NodeId id) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse sweep from a 1×1 loss node. Clears gradients from any earlier sweep.
  void backward(NodeId loss);

  NodeId matmul(NodeId a, NodeId b);
  /// a · bᵀ
  NodeId matmul_transposed(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  /// Adds a 1×n row to every row of a.
  NodeId add_row(NodeId a, NodeId row);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, T factor);
  NodeId gelu(NodeId a);
  /// Row-wise layer norm with 1×n gain and bias.
  NodeId layer_norm(NodeId x, NodeId gain, NodeId bias, T eps);
  NodeId gather_rows(NodeId table, std::span<const std::int32_t> ids);
  NodeId slice_rows(NodeId a, std::size_t begin, std::size_t count);
  NodeId concat_rows(NodeId top, NodeId bottom);
  NodeId attention(NodeId q, NodeId k, NodeId v, const AttentionShape& shape);
  NodeId log_softmax(NodeId logits);
  /// 1×1 sum of every entry.
  NodeId sum(NodeId a);
  /// 1×1 Σ_r −log softmax(logits[r])[targets[r]], each term clamped at −log(kProbabilityFloor).
  NodeId nll(NodeId logits, std::span<const std::int32_t> targets);
  /// Inverted dropout; identity when rate == 0.
  NodeId dropout(NodeId a, T rate, Rng& rng);

 private:
  using Backprop = std::function<void(Tape&, const Matrix<T>& out_grad)>;

  struct Node {
    Matrix<T> owned;
    const Matrix<T>* external = nullptr;
    Matrix<T> grad;
    bool needs_grad = false;
    Backprop backprop;
  };

  NodeId push(Matrix<T> value, bool needs_grad, Backprop backprop);
  Matrix<T>& grad_buffer(NodeId id);
  const Node& node(NodeId id) const;

  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace dprompt::num
