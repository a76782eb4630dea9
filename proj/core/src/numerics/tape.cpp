#include "dprompt/numerics/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dprompt::num {

namespace {

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw std::invalid_argument(std::string(op) + ": " + detail);
}

std::string shape_str(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(NodeId id) const {
  if (id.index >= nodes_.size()) throw std::out_of_range("Tape: unknown node");
  return nodes_[id.index];
}

template <typename T>
NodeId Tape<T>::push(Matrix<T> value, bool needs_grad, Backprop backprop) {
  Node n;
  n.owned = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
NodeId Tape<T>::parameter(const Matrix<T>& value, bool trainable) {
  Node n;
  n.external = &value;
  n.needs_grad = trainable;
  nodes_.push_back(std::move(n));
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
NodeId Tape<T>::constant(Matrix<T> value) {
  return push(std::move(value), false, nullptr);
}

template <typename T>
const Matrix<T>& Tape<T>::value(NodeId id) const {
  const Node& n = node(id);
  return n.external ? *n.external : n.owned;
}

template <typename T>
const Matrix<T>& Tape<T>::grad(NodeId id) const {
  const Node& n = node(id);
  if (!n.needs_grad) {
    throw std::logic_error("Tape: node " + std::to_string(id.index) +
                           " is outside the trainable set and has no gradient");
  }
  if (n.grad.empty() && !value(id).empty()) {
    throw std::logic_error("Tape: no gradient for node " + std::to_string(id.index) +
                           "; run backward() first");
  }
  return n.grad;
}

template <typename T>
Matrix<T>& Tape<T>::grad_buffer(NodeId id) {
  Node& n = nodes_[id.index];
  if (n.grad.empty()) {
    const Matrix<T>& v = n.external ? *n.external : n.owned;
    n.grad = Matrix<T>(v.rows(), v.cols());
  }
  return n.grad;
}

template <typename T>
void Tape<T>::backward(NodeId loss) {
  const Matrix<T>& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw std::invalid_argument("Tape::backward: loss must be 1x1, got " +
                                shape_str(lv.rows(), lv.cols()));
  }
  bool any_trainable = false;
  for (auto& n : nodes_) {
    n.grad = Matrix<T>();
    if (n.external && n.needs_grad) any_trainable = true;
  }
  if (!any_trainable) throw std::logic_error("Tape::backward: trainable set is empty");
  if (nodes_[loss.index].needs_grad) {
    grad_buffer(loss)(0, 0) = T{1};
    for (std::size_t i = loss.index + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.empty() || !n.backprop) continue;
      n.backprop(*this, n.grad);
    }
  }
  // Trainable leaves the loss does not depend on get an explicit zero gradient.
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].external && nodes_[i].needs_grad) {
      grad_buffer(NodeId{static_cast<std::uint32_t>(i)});
    }
  }
}

template <typename T>
NodeId Tape<T>::matmul(NodeId a, NodeId b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  if (av.cols() != bv.rows()) {
    shape_error("matmul", shape_str(av.rows(), av.cols()) + " * " + shape_str(bv.rows(), bv.cols()));
  }
  Matrix<T> out(av.rows(), bv.cols());
  kernel::gemm_nn(av, bv, out);
  const bool ga = requires_grad(a), gb = requires_grad(b);
  return push(std::move(out), ga || gb, [a, b, ga, gb](Tape& t, const Matrix<T>& g) {
    if (ga) {
      // dA += G · Bᵀ
      kernel::gemm_nt(g, t.value(b), t.grad_buffer(a));
    }
    if (gb) {
      // dB += Aᵀ · G
      kernel::gemm_tn(t.value(a), g, t.grad_buffer(b));
    }
  });
}

template <typename T>
NodeId Tape<T>::matmul_transposed(NodeId a, NodeId b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  if (av.cols() != bv.cols()) {
    shape_error("matmul_transposed",
                shape_str(av.rows(), av.cols()) + " * T(" + shape_str(bv.rows(), bv.cols()) + ")");
  }
  Matrix<T> out(av.rows(), bv.rows());
  kernel::gemm_nt(av, bv, out);
  const bool ga = requires_grad(a), gb = requires_grad(b);
  return push(std::move(out), ga || gb, [a, b, ga, gb](Tape& t, const Matrix<T>& g) {
    if (ga) kernel::gemm_nn(g, t.value(b), t.grad_buffer(a));
    if (gb) kernel::gemm_tn(g, t.value(a), t.grad_buffer(b));
  });
}

template <typename T>
NodeId Tape<T>::add(NodeId a, NodeId b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  if (!av.same_shape(bv)) {
    shape_error("add", shape_str(av.rows(), av.cols()) + " + " + shape_str(bv.rows(), bv.cols()));
  }
  Matrix<T> out = av;
  auto o = out.values();
  auto bvals = bv.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bvals[i];
  const bool ga = requires_grad(a), gb = requires_grad(b);
  return push(std::move(out), ga || gb, [a, b, ga, gb](Tape& t, const Matrix<T>& g) {
    for (auto [id, on] : {std::pair{a, ga}, std::pair{b, gb}}) {
      if (!on) continue;
      auto dst = t.grad_buffer(id).values();
      auto src = g.values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  });
}

template <typename T>
NodeId Tape<T>::add_row(NodeId a, NodeId row) {
  const auto& av = value(a);
  const auto& rv = value(row);
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    shape_error("add_row", shape_str(av.rows(), av.cols()) + " + " + shape_str(rv.rows(), rv.cols()));
  }
  Matrix<T> out = av;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto o = out.row(r);
    for (std::size_t c = 0; c < o.size(); ++c) o[c] += rv(0, c);
  }
  const bool ga = requires_grad(a), gr = requires_grad(row);
  return push(std::move(out), ga || gr, [a, row, ga, gr](Tape& t, const Matrix<T>& g) {
    if (ga) {
      auto dst = t.grad_buffer(a).values();
      auto src = g.values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
    if (gr) {
      auto& dr = t.grad_buffer(row);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        auto src = g.row(r);
        for (std::size_t c = 0; c < src.size(); ++c) dr(0, c) += src[c];
      }
    }
  });
}

template <typename T>
NodeId Tape<T>::mul(NodeId a, NodeId b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  if (!av.same_shape(bv)) {
    shape_error("mul", shape_str(av.rows(), av.cols()) + " * " + shape_str(bv.rows(), bv.cols()));
  }
  Matrix<T> out = av;
  auto o = out.values();
  auto bvals = bv.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bvals[i];
  const bool ga = requires_grad(a), gb = requires_grad(b);
  return push(std::move(out), ga || gb, [a, b, ga, gb](Tape& t, const Matrix<T>& g) {
    auto src = g.values();
    if (ga) {
      auto dst = t.grad_buffer(a).values();
      auto other = t.value(b).values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i] * other[i];
    }
    if (gb) {
      auto dst = t.grad_buffer(b).values();
      auto other = t.value(a).values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i] * other[i];
    }
  });
}

template <typename T>
NodeId Tape<T>::scale(NodeId a, T factor) {
  Matrix<T> out = value(a);
  for (auto& x : out.values()) x *= factor;
  return push(std::move(out), requires_grad(a), [a, factor](Tape& t, const Matrix<T>& g) {
    auto dst = t.grad_buffer(a).values();
    auto src = g.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * src[i];
  });
}

template <typename T>
NodeId Tape<T>::gelu(NodeId a) {
  Matrix<T> out = value(a);
  for (auto& x : out.values()) x = kernel::gelu(x);
  return push(std::move(out), requires_grad(a), [a](Tape& t, const Matrix<T>& g) {
    auto dst = t.grad_buffer(a).values();
    auto x = t.value(a).values();
    auto src = g.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i] * kernel::gelu_grad(x[i]);
  });
}

template <typename T>
NodeId Tape<T>::layer_norm(NodeId x, NodeId gain, NodeId bias, T eps) {
  const auto& xv = value(x);
  const auto& gv = value(gain);
  const auto& bv = value(bias);
  const std::size_t n = xv.cols();
  if (gv.rows() != 1 || bv.rows() != 1 || gv.cols() != n || bv.cols() != n) {
    shape_error("layer_norm", "gain/bias must be 1x" + std::to_string(n));
  }
  if (!(eps > 0)) shape_error("layer_norm", "eps must be positive");
  auto normalized = std::make_shared<Matrix<T>>(xv.rows(), n);
  auto inv_std = std::make_shared<std::vector<T>>(xv.rows());
  Matrix<T> out(xv.rows(), n);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto in = xv.row(r);
    T mean = 0;
    for (T v : in) mean += v;
    mean /= static_cast<T>(n);
    T var = 0;
    for (T v : in) var += (v - mean) * (v - mean);
    var /= static_cast<T>(n);
    const T is = T{1} / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    auto xh = normalized->row(r);
    auto o = out.row(r);
    for (std::size_t c = 0; c < n; ++c) {
      xh[c] = (in[c] - mean) * is;
      o[c] = gv(0, c) * xh[c] + bv(0, c);
    }
  }
  const bool gx = requires_grad(x), gg = requires_grad(gain), gb = requires_grad(bias);
  return push(std::move(out), gx || gg || gb,
              [x, gain, bias, gx, gg, gb, normalized, inv_std](Tape& t, const Matrix<T>& g) {
                const std::size_t n = g.cols();
                const auto& gv = t.value(gain);
                std::vector<T> dxhat(n);
                for (std::size_t r = 0; r < g.rows(); ++r) {
                  auto go = g.row(r);
                  auto xh = normalized->row(r);
                  if (gg) {
                    auto& dg = t.grad_buffer(gain);
                    for (std::size_t c = 0; c < n; ++c) dg(0, c) += go[c] * xh[c];
                  }
                  if (gb) {
                    auto& db = t.grad_buffer(bias);
                    for (std::size_t c = 0; c < n; ++c) db(0, c) += go[c];
                  }
                  if (gx) {
                    T mean_d = 0, mean_dx = 0;
                    for (std::size_t c = 0; c < n; ++c) {
                      dxhat[c] = go[c] * gv(0, c);
                      mean_d += dxhat[c];
                      mean_dx += dxhat[c] * xh[c];
                    }
                    mean_d /= static_cast<T>(n);
                    mean_dx /= static_cast<T>(n);
                    auto dx = t.grad_buffer(x).row(r);
                    const T is = (*inv_std)[r];
                    for (std::size_t c = 0; c < n; ++c) {
                      dx[c] += is * (dxhat[c] - mean_d - xh[c] * mean_dx);
                    }
                  }
                }
              });
}

template <typename T>
NodeId Tape<T>::gather_rows(NodeId table, std::span<const std::int32_t> ids) {
  const auto& tv = value(table);
  Matrix<T> out(ids.size(), tv.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= tv.rows()) {
      throw std::out_of_range("gather_rows: id " + std::to_string(ids[r]) + " outside table of " +
                              std::to_string(tv.rows()) + " rows");
    }
    auto src = tv.row(static_cast<std::size_t>(ids[r]));
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  std::vector<std::int32_t> saved(ids.begin(), ids.end());
  return push(std::move(out), requires_grad(table),
              [table, saved = std::move(saved)](Tape& t, const Matrix<T>& g) {
                auto& dt = t.grad_buffer(table);
                for (std::size_t r = 0; r < saved.size(); ++r) {
                  auto dst = dt.row(static_cast<std::size_t>(saved[r]));
                  auto src = g.row(r);
                  for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
                }
              });
}

template <typename T>
NodeId Tape<T>::slice_rows(NodeId a, std::size_t begin, std::size_t count) {
  const auto& av = value(a);
  if (begin + count > av.rows()) {
    shape_error("slice_rows", "rows [" + std::to_string(begin) + ", " +
                                  std::to_string(begin + count) + ") of " + std::to_string(av.rows()));
  }
  const std::size_t w = av.cols();
  std::vector<T> data(av.data() + begin * w, av.data() + (begin + count) * w);
  Matrix<T> out(count, w, std::move(data));
  return push(std::move(out), requires_grad(a), [a, begin](Tape& t, const Matrix<T>& g) {
    auto& da = t.grad_buffer(a);
    auto src = g.values();
    T* dst = da.data() + begin * da.cols();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
  });
}

template <typename T>
NodeId Tape<T>::concat_rows(NodeId top, NodeId bottom) {
  const auto& tv = value(top);
  const auto& bv = value(bottom);
  if (tv.cols() != bv.cols() && !tv.empty() && !bv.empty()) {
    shape_error("concat_rows", shape_str(tv.rows(), tv.cols()) + " over " +
                                   shape_str(bv.rows(), bv.cols()));
  }
  const std::size_t w = tv.empty() ? bv.cols() : tv.cols();
  std::vector<T> data;
  data.reserve(tv.size() + bv.size());
  data.insert(data.end(), tv.values().begin(), tv.values().end());
  data.insert(data.end(), bv.values().begin(), bv.values().end());
  const std::size_t split = tv.size();
  Matrix<T> out(tv.rows() + bv.rows(), w, std::move(data));
  const bool gt = requires_grad(top), gb = requires_grad(bottom);
  return push(std::move(out), gt || gb, [top, bottom, gt, gb, split](Tape& t, const Matrix<T>& g) {
    auto src = g.values();
    if (gt) {
      auto dst = t.grad_buffer(top).values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
    if (gb) {
      auto dst = t.grad_buffer(bottom).values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[split + i];
    }
  });
}

template <typename T>
NodeId Tape<T>::attention(NodeId q, NodeId k, NodeId v, const AttentionShape& shape) {
  if (value(v).cols() != value(q).cols()) throw std::invalid_argument("Tape::attention: V width differs from Q");
  auto probs = std::make_shared<std::vector<Matrix<T>>>();
  Matrix<T> out = kernel::attention(value(q), value(k), value(v), shape, probs.get());
  const bool gq = requires_grad(q), gk = requires_grad(k), gv = requires_grad(v);
  return push(std::move(out), gq || gk || gv,
              [q, k, v, gq, gk, gv, shape, probs](Tape& t, const Matrix<T>& g) {
                const auto& qv = t.value(q);
                const auto& kv = t.value(k);
                const auto& vv = t.value(v);
                const std::size_t m = qv.rows(), n = kv.rows(), width = qv.cols();
                const std::size_t dh = width / shape.heads;
                const T scale = T{1} / std::sqrt(static_cast<T>(dh));
                Matrix<T>* dq = gq ? &t.grad_buffer(q) : nullptr;
                Matrix<T>* dk = gk ? &t.grad_buffer(k) : nullptr;
                Matrix<T>* dv = gv ? &t.grad_buffer(v) : nullptr;
                std::vector<T> dscore(n);
                for (std::size_t h = 0; h < shape.heads; ++h) {
                  const std::size_t col = h * dh;
                  const auto& p = (*probs)[h];
                  for (std::size_t i = 0; i < m; ++i) {
                    const std::size_t limit =
                        std::min(std::max(shape.n_prefix, shape.query_offset + i + 1), n);
                    const T* gi = g.data() + i * width + col;
                    T weighted = 0;
                    for (std::size_t j = 0; j < limit; ++j) {
                      const T pij = p(i, j);
                      const T* vj = vv.data() + j * width + col;
                      dscore[j] = kernel::dot(gi, vj, dh);
                      weighted += pij * dscore[j];
                      if (dv) {
                        T* dvj = dv->data() + j * width + col;
                        for (std::size_t c = 0; c < dh; ++c) dvj[c] += pij * gi[c];
                      }
                    }
                    if (!dq && !dk) continue;
                    const T* qi = qv.data() + i * width + col;
                    for (std::size_t j = 0; j < limit; ++j) {
                      const T ds = p(i, j) * (dscore[j] - weighted) * scale;
                      if (ds == T{0}) continue;
                      if (dq) {
                        T* dqi = dq->data() + i * width + col;
                        const T* kj = kv.data() + j * width + col;
                        for (std::size_t c = 0; c < dh; ++c) dqi[c] += ds * kj[c];
                      }
                      if (dk) {
                        T* dkj = dk->data() + j * width + col;
                        for (std::size_t c = 0; c < dh; ++c) dkj[c] += ds * qi[c];
                      }
                    }
                  }
                }
              });
}

template <typename T>
NodeId Tape<T>::log_softmax(NodeId logits) {
  Matrix<T> out = kernel::log_softmax_rows(value(logits));
  return push(std::move(out), requires_grad(logits), [logits](Tape& t, const Matrix<T>& g) {
    // d/dx_j = g_j − softmax_j · Σ g; the output node's own value is not reachable here, so
    // recompute it from the input.
    const Matrix<T> ls = kernel::log_softmax_rows(t.value(logits));
    auto& dl = t.grad_buffer(logits);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      auto gr = g.row(r);
      T total = 0;
      for (T x : gr) total += x;
      auto dst = dl.row(r);
      auto lr = ls.row(r);
      for (std::size_t c = 0; c < gr.size(); ++c) dst[c] += gr[c] - std::exp(lr[c]) * total;
    }
  });
}

template <typename T>
NodeId Tape<T>::sum(NodeId a) {
  T total = 0;
  for (T x : value(a).values()) total += x;
  Matrix<T> out(1, 1, total);
  return push(std::move(out), requires_grad(a), [a](Tape& t, const Matrix<T>& g) {
    const T s = g(0, 0);
    for (auto& x : t.grad_buffer(a).values()) x += s;
  });
}

template <typename T>
NodeId Tape<T>::nll(NodeId logits, std::span<const std::int32_t> targets) {
  const auto& lv = value(logits);
  if (targets.size() != lv.rows()) {
    shape_error("nll", std::to_string(targets.size()) + " targets for " +
                           std::to_string(lv.rows()) + " rows");
  }
  auto log_probs = std::make_shared<Matrix<T>>(kernel::log_softmax_rows(lv));
  const T ceiling = -std::log(static_cast<T>(kProbabilityFloor));
  auto clamped = std::make_shared<std::vector<bool>>(targets.size(), false);
  T total = 0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= lv.cols()) {
      throw std::out_of_range("nll: target " + std::to_string(targets[r]) + " out of range");
    }
    T loss = -(*log_probs)(r, static_cast<std::size_t>(targets[r]));
    if (loss > ceiling) {
      loss = ceiling;
      (*clamped)[r] = true;
    }
    total += loss;
  }
  std::vector<std::int32_t> saved(targets.begin(), targets.end());
  return push(Matrix<T>(1, 1, total), requires_grad(logits),
              [logits, log_probs, clamped, saved = std::move(saved)](Tape& t, const Matrix<T>& g) {
                const T s = g(0, 0);
                auto& dl = t.grad_buffer(logits);
                for (std::size_t r = 0; r < saved.size(); ++r) {
                  if ((*clamped)[r]) continue;
                  auto dst = dl.row(r);
                  auto lp = log_probs->row(r);
                  for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += s * std::exp(lp[c]);
                  dst[static_cast<std::size_t>(saved[r])] -= s;
                }
              });
}

template <typename T>
NodeId Tape<T>::dropout(NodeId a, T rate, Rng& rng) {
  if (rate <= T{0}) return a;
  if (rate >= T{1}) throw std::invalid_argument("dropout: rate must be below 1");
  const auto& av = value(a);
  auto mask = std::make_shared<Matrix<T>>(av.rows(), av.cols());
  std::bernoulli_distribution keep(1.0 - static_cast<double>(rate));
  const T kept = T{1} / (T{1} - rate);
  Matrix<T> out = av;
  auto o = out.values();
  auto mk = mask->values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    mk[i] = keep(rng) ? kept : T{0};
    o[i] *= mk[i];
  }
  return push(std::move(out), requires_grad(a), [a, mask](Tape& t, const Matrix<T>& g) {
    auto dst = t.grad_buffer(a).values();
    auto src = g.values();
    auto mk = mask->values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i] * mk[i];
  });
}

template class Tape<float>;
template class Tape<double>;

}  // namespace dprompt::num
