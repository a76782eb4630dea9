#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dprompt/numerics/matrix.hpp"

namespace dprompt::num {

/// Probability floor used by cross_entropy; -log(kProbabilityFloor) is the largest loss a single
/// token can contribute.
inline constexpr double kProbabilityFloor = 1e-12;

// Standalone primitives. These are the reference forms of what the tape records; the tape
// kernels below are shared with them.

/// Max-subtracted softmax. Throws on empty or non-finite input.
template <typename T>
std::vector<T> softmax(std::span<const T> v);

/// gain ⊙ (x − mean)/√(var + eps) + bias, population variance.
template <typename T>
std::vector<T> layer_norm(std::span<const T> x, std::span<const T> gain, std::span<const T> bias,
                          T eps);

/// Single-head scaled dot-product attention. Query i sees key j iff j < n_prefix or j <= i.
template <typename T>
Matrix<T> causal_attention(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                           std::size_t n_prefix);

/// -log p[true_index], clamped at -log(kProbabilityFloor).
template <typename T>
T cross_entropy(std::span<const T> p, std::size_t true_index);

/// Shape of a multi-head attention call. Query row i sits at absolute position
/// query_offset + i; it sees keys [0, max(n_prefix, query_offset + i + 1)).
struct AttentionShape {
  std::size_t heads = 1;
  std::size_t n_prefix = 0;
  std::size_t query_offset = 0;
};

namespace kernel {

/// Dot product with a fixed 8-way accumulation order.
template <typename T>
T dot(const T* a, const T* b, std::size_t n);

/// c[i, :] += a[i, p] * b[p, :]
template <typename T>
void gemm_nn(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c);
/// c[i, j] += a[i, :] · b[j, :]
template <typename T>
void gemm_nt(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c);
/// c[i, j] += Σ_r a[r, i] * b[r, j]
template <typename T>
void gemm_tn(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c);

/// Numerically stable log-softmax of each row.
template <typename T>
Matrix<T> log_softmax_rows(const Matrix<T>& logits);

/// Multi-head attention forward. Fills probs (one heads-length list of rows×keys matrices) for
/// the backward pass when probs != nullptr.
template <typename T>
Matrix<T> attention(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                    const AttentionShape& shape, std::vector<Matrix<T>>* probs);

template <typename T>
T gelu(T x);
template <typename T>
T gelu_grad(T x);

}  // namespace kernel

/// Throws std::invalid_argument unless a.cols() == b.rows().
template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b);

template <typename T>
bool all_finite(std::span<const T> v);

}  // namespace dprompt::num
