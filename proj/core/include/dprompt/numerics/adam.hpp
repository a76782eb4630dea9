#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "dprompt/numerics/matrix.hpp"

namespace dprompt::num {

struct AdamSettings {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over a fixed list of tensors. Moment buffers are allocated on the first step.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamSettings settings) : s_(settings) {}

  void step(const std::vector<Matrix<T>*>& params, const std::vector<const Matrix<T>*>& grads) {
    if (params.size() != grads.size()) throw std::invalid_argument("Adam: params/grads mismatch");
    if (m_.empty()) {
      for (auto* p : params) {
        m_.emplace_back(p->rows(), p->cols());
        v_.emplace_back(p->rows(), p->cols());
      }
    }
    if (m_.size() != params.size()) throw std::invalid_argument("Adam: parameter list changed");
    ++t_;
    const double c1 = 1.0 - std::pow(s_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(s_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(s_.beta1), b2 = static_cast<T>(s_.beta2);
    const T step = static_cast<T>(s_.lr / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(s_.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params[i]->values();
      auto g = grads[i]->values();
      auto m = m_[i].values();
      auto v = v_[i].values();
      if (g.size() != p.size()) throw std::invalid_argument("Adam: gradient shape mismatch");
      for (std::size_t j = 0; j < p.size(); ++j) {
        m[j] = b1 * m[j] + (T{1} - b1) * g[j];
        v[j] = b2 * v[j] + (T{1} - b2) * g[j] * g[j];
        p[j] -= step * m[j] / (std::sqrt(v[j] * inv_c2) + eps);
      }
    }
  }

  long steps() const noexcept { return t_; }

 private:
  AdamSettings s_;
  std::vector<Matrix<T>> m_, v_;
  long t_ = 0;
};

}  // namespace dprompt::num
