#include "dprompt/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace dprompt::num {

template <typename T>
bool all_finite(std::span<const T> v) {
  return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
}

template <typename T>
std::vector<T> softmax(std::span<const T> v) {
  if (v.empty()) throw std::invalid_argument("softmax: empty vector");
  if (!all_finite(v)) throw std::domain_error("softmax: non-finite input");
  const T top = *std::max_element(v.begin(), v.end());
  std::vector<T> out(v.size());
  T total = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - top);
    total += out[i];
  }
  for (auto& x : out) x /= total;
  return out;
}

template <typename T>
std::vector<T> layer_norm(std::span<const T> x, std::span<const T> gain, std::span<const T> bias,
                          T eps) {
  if (x.size() != gain.size() || x.size() != bias.size()) {
    throw std::invalid_argument("layer_norm: length mismatch");
  }
  if (x.empty()) throw std::invalid_argument("layer_norm: empty vector");
  if (!(eps > 0)) throw std::invalid_argument("layer_norm: eps must be positive");
  const auto n = static_cast<T>(x.size());
  T mean = 0;
  for (T v : x) mean += v;
  mean /= n;
  T var = 0;
  for (T v : x) var += (v - mean) * (v - mean);
  var /= n;
  const T inv_std = T{1} / std::sqrt(var + eps);
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = gain[i] * (x[i] - mean) * inv_std + bias[i];
  return out;
}

template <typename T>
Matrix<T> causal_attention(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                           std::size_t n_prefix) {
  if (q.rows() != k.rows() || k.rows() != v.rows()) {
    throw std::invalid_argument("causal_attention: row counts differ");
  }
  if (q.cols() != k.cols()) throw std::invalid_argument("causal_attention: Q/K widths differ");
  return kernel::attention<T>(q, k, v, AttentionShape{1, n_prefix, 0}, nullptr);
}

template <typename T>
T cross_entropy(std::span<const T> p, std::size_t true_index) {
  if (true_index >= p.size()) {
    throw std::out_of_range("cross_entropy: index " + std::to_string(true_index) +
                            " out of range for " + std::to_string(p.size()) + " classes");
  }
  const T floor = static_cast<T>(kProbabilityFloor);
  return -std::log(std::max(p[true_index], floor));
}

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                                std::to_string(b.rows()) + " differ");
  }
  Matrix<T> c(a.rows(), b.cols());
  kernel::gemm_nn(a, b, c);
  return c;
}

namespace kernel {

template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
  }
  for (std::size_t l = 0; i < n; ++i, ++l) acc[l] += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template <typename T>
void gemm_nn(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c) {
  const std::size_t m = a.rows(), inner = a.cols(), n = b.cols();
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c.data() + i * n;
    const T* arow = a.data() + i * inner;
    for (std::size_t p = 0; p < inner; ++p) {
      const T s = arow[p];
      if (s == T{0}) continue;
      const T* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += s * brow[j];
    }
  }
}

template <typename T>
void gemm_nt(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c) {
  const std::size_t m = a.rows(), inner = a.cols(), n = b.rows();
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a.data() + i * inner;
    T* crow = c.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += dot(arow, b.data() + j * inner, inner);
  }
}

template <typename T>
void gemm_tn(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c) {
  const std::size_t rows = a.rows(), m = a.cols(), n = b.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* arow = a.data() + r * m;
    const T* brow = b.data() + r * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T s = arow[i];
      if (s == T{0}) continue;
      T* crow = c.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += s * brow[j];
    }
  }
}

template <typename T>
Matrix<T> log_softmax_rows(const Matrix<T>& logits) {
  Matrix<T> out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto in = logits.row(r);
    auto o = out.row(r);
    const T top = *std::max_element(in.begin(), in.end());
    T total = 0;
    for (T x : in) total += std::exp(x - top);
    const T log_total = std::log(total);
    for (std::size_t c = 0; c < in.size(); ++c) o[c] = in[c] - top - log_total;
  }
  return out;
}

template <typename T>
Matrix<T> attention(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                    const AttentionShape& shape, std::vector<Matrix<T>>* probs) {
  const std::size_t m = q.rows(), n = k.rows(), width = q.cols();
  if (shape.heads == 0 || width % shape.heads != 0) {
    throw std::invalid_argument("attention: width not divisible by head count");
  }
  if (k.cols() != width || v.rows() != n || v.cols() % shape.heads != 0) {
    throw std::invalid_argument("attention: dimension mismatch");
  }
  const std::size_t v_width = v.cols(), dv = v_width / shape.heads;
  if (m > 0 && shape.query_offset + m > n) {
    throw std::invalid_argument("attention: queries extend past the last key");
  }
  const std::size_t dh = width / shape.heads;
  const T scale = T{1} / std::sqrt(static_cast<T>(dh));
  Matrix<T> out(m, v_width);
  if (probs) probs->assign(shape.heads, Matrix<T>(m, n));
  std::vector<T> scores(n);
  for (std::size_t h = 0; h < shape.heads; ++h) {
    const std::size_t col = h * dh;
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t visible = std::max(shape.n_prefix, shape.query_offset + i + 1);
      const std::size_t limit = std::min(visible, n);
      const T* qi = q.data() + i * width + col;
      T top = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < limit; ++j) {
        scores[j] = dot(qi, k.data() + j * width + col, dh) * scale;
        top = std::max(top, scores[j]);
      }
      T total = 0;
      for (std::size_t j = 0; j < limit; ++j) {
        scores[j] = std::exp(scores[j] - top);
        total += scores[j];
      }
      T* oi = out.data() + i * v_width + h * dv;
      for (std::size_t j = 0; j < limit; ++j) {
        const T p = scores[j] / total;
        if (probs) (*probs)[h](i, j) = p;
        const T* vj = v.data() + j * v_width + h * dv;
        for (std::size_t c = 0; c < dv; ++c) oi[c] += p * vj[c];
      }
    }
  }
  return out;
}

namespace {
template <typename T>
constexpr T kGeluC = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
template <typename T>
constexpr T kGeluA = static_cast<T>(0.044715);
}  // namespace

template <typename T>
T gelu(T x) {
  const T inner = kGeluC<T> * (x + kGeluA<T> * x * x * x);
  return T{0.5} * x * (T{1} + std::tanh(inner));
}

template <typename T>
T gelu_grad(T x) {
  const T inner = kGeluC<T> * (x + kGeluA<T> * x * x * x);
  const T t = std::tanh(inner);
  const T dinner = kGeluC<T> * (T{1} + T{3} * kGeluA<T> * x * x);
  return T{0.5} * (T{1} + t) + T{0.5} * x * (T{1} - t * t) * dinner;
}

#define DPROMPT_INSTANTIATE_KERNELS(T)                                                        \
  template T dot<T>(const T*, const T*, std::size_t);                                        \
  template void gemm_nn<T>(const Matrix<T>&, const Matrix<T>&, Matrix<T>&);                  \
  template void gemm_nt<T>(const Matrix<T>&, const Matrix<T>&, Matrix<T>&);                  \
  template void gemm_tn<T>(const Matrix<T>&, const Matrix<T>&, Matrix<T>&);                  \
  template Matrix<T> log_softmax_rows<T>(const Matrix<T>&);                                  \
  template Matrix<T> attention<T>(const Matrix<T>&, const Matrix<T>&, const Matrix<T>&,      \
                                  const AttentionShape&, std::vector<Matrix<T>>*);           \
  template T gelu<T>(T);                                                                      \
  template T gelu_grad<T>(T);

DPROMPT_INSTANTIATE_KERNELS(float)
DPROMPT_INSTANTIATE_KERNELS(double)
#undef DPROMPT_INSTANTIATE_KERNELS

}  // namespace kernel

#define DPROMPT_INSTANTIATE_OPS(T)                                                            \
  template bool all_finite<T>(std::span<const T>);                                           \
  template std::vector<T> softmax<T>(std::span<const T>);                                    \
  template std::vector<T> layer_norm<T>(std::span<const T>, std::span<const T>,              \
                                        std::span<const T>, T);                              \
  template Matrix<T> causal_attention<T>(const Matrix<T>&, const Matrix<T>&,                 \
                                         const Matrix<T>&, std::size_t);                     \
  template T cross_entropy<T>(std::span<const T>, std::size_t);                              \
  template Matrix<T> matmul<T>(const Matrix<T>&, const Matrix<T>&);

DPROMPT_INSTANTIATE_OPS(float)
DPROMPT_INSTANTIATE_OPS(double)
#undef DPROMPT_INSTANTIATE_OPS

}  // namespace dprompt::num
