#pragma once

// Straight-loop transformer used as an oracle for the tape implementation. Everything is
// recomputed from scratch in double with no shared code beyond the parameter structs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "dprompt/model/adapters.hpp"
#include "dprompt/model/config.hpp"
#include "dprompt/model/parameters.hpp"
#include "dprompt/tokenizer/vocab.hpp"

namespace ref {

using Rows = std::vector<std::vector<double>>;

inline double get(const dprompt::num::Matrix<double>& m, std::size_t r, std::size_t c) { return m(r, c); }

inline std::vector<double> norm(const std::vector<double>& x, const dprompt::num::Matrix<double>& g,
                                const dprompt::num::Matrix<double>& b, double eps) {
  double mean = 0;
  for (double v : x) mean += v;
  mean /= double(x.size());
  double var = 0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= double(x.size());
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mean) / std::sqrt(var + eps) * get(g, 0, i) + get(b, 0, i);
  return y;
}

inline std::vector<double> affine(const std::vector<double>& x, const dprompt::num::Matrix<double>& w,
                                  const dprompt::num::Matrix<double>& b) {
  std::vector<double> y(w.cols());
  for (std::size_t j = 0; j < w.cols(); ++j) {
    double s = get(b, 0, j);
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * get(w, i, j);
    y[j] = s;
  }
  return y;
}

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (x + 0.044715 * x * x * x)));
}

/// log p(x_t | prompt, BOS, x_<t) for every token of `ids`.
inline std::vector<double> token_logprobs(const dprompt::lm::ModelConfig& cfg,
                                          const dprompt::lm::Parameters<double>& p,
                                          const std::vector<dprompt::tok::TokenId>& ids,
                                          const dprompt::num::Matrix<double>* prompt = nullptr,
                                          const dprompt::lm::DomainAdapters<double>* adapters = nullptr) {
  const std::size_t d = cfg.d_model, H = cfg.n_heads, dh = d / H;
  const std::size_t k = prompt ? prompt->rows() : 0;
  const std::size_t T = ids.size();
  const std::size_t N = k + T;
  const std::size_t token_pos0 = cfg.prompt_positions ? k : 0;

  Rows h(N, std::vector<double>(d));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      h[i][c] = (*prompt)(i, c) + (cfg.prompt_positions ? get(p.position_embedding, i, c) : 0.0);
    }
  }
  for (std::size_t t = 0; t < T; ++t) {
    const auto tok = t == 0 ? dprompt::tok::kBos : ids[t - 1];
    for (std::size_t c = 0; c < d; ++c) {
      h[k + t][c] = get(p.token_embedding, std::size_t(tok), c) + get(p.position_embedding, token_pos0 + t, c);
    }
  }

  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const auto& L = p.layers[l];
    Rows q(N), kk(N), v(N);
    for (std::size_t i = 0; i < N; ++i) {
      const auto a = norm(h[i], L.ln1_gain, L.ln1_bias, cfg.layer_norm_eps);
      q[i] = affine(a, L.q_weight, L.q_bias);
      kk[i] = affine(a, L.k_weight, L.k_bias);
      v[i] = affine(a, L.v_weight, L.v_bias);
    }
    Rows ctx(N, std::vector<double>(d, 0.0));
    for (std::size_t head = 0; head < H; ++head) {
      for (std::size_t i = 0; i < N; ++i) {
        const std::size_t visible = std::max(k, i + 1);
        std::vector<double> s(visible);
        double mx = -1e300;
        for (std::size_t j = 0; j < visible; ++j) {
          double dot = 0;
          for (std::size_t c = 0; c < dh; ++c) dot += q[i][head * dh + c] * kk[j][head * dh + c];
          s[j] = dot / std::sqrt(double(dh));
          mx = std::max(mx, s[j]);
        }
        double z = 0;
        for (auto& x : s) z += (x = std::exp(x - mx));
        for (std::size_t j = 0; j < visible; ++j) {
          for (std::size_t c = 0; c < dh; ++c) ctx[i][head * dh + c] += s[j] / z * v[j][head * dh + c];
        }
      }
    }
    for (std::size_t i = 0; i < N; ++i) {
      const auto o = affine(ctx[i], L.out_weight, L.out_bias);
      for (std::size_t c = 0; c < d; ++c) h[i][c] += o[c];
      auto f = affine(norm(h[i], L.ln2_gain, L.ln2_bias, cfg.layer_norm_eps), L.fc_weight, L.fc_bias);
      for (auto& x : f) x = gelu(x);
      const auto g = affine(f, L.fc_out_weight, L.fc_out_bias);
      for (std::size_t c = 0; c < d; ++c) h[i][c] += g[c];
      if (adapters) {
        const auto& A = adapters->layers[l];
        auto z = affine(norm(h[i], A.ln_gain, A.ln_bias, cfg.layer_norm_eps), A.down_weight, A.down_bias);
        for (auto& x : z) x = gelu(x);
        const auto u = affine(z, A.up_weight, A.up_bias);
        for (std::size_t c = 0; c < d; ++c) h[i][c] += u[c];
      }
    }
  }

  std::vector<double> out(T);
  for (std::size_t t = 0; t < T; ++t) {
    const auto x = norm(h[k + t], p.final_gain, p.final_bias, cfg.layer_norm_eps);
    std::vector<double> logits(cfg.vocab_size);
    double mx = -1e300;
    for (std::size_t w = 0; w < cfg.vocab_size; ++w) {
      double s = 0;
      for (std::size_t c = 0; c < d; ++c) s += x[c] * get(p.token_embedding, w, c);
      logits[w] = s;
      mx = std::max(mx, s);
    }
    double z = 0;
    for (double s : logits) z += std::exp(s - mx);
    out[t] = logits[std::size_t(ids[t])] - mx - std::log(z);
  }
  return out;
}

/// Σ over sentences of Σ_t −log p(x_t | ·), summed one token at a time.
inline double corpus_loss(const dprompt::lm::ModelConfig& cfg, const dprompt::lm::Parameters<double>& p,
                          const std::vector<std::vector<dprompt::tok::TokenId>>& corpus,
                          const dprompt::num::Matrix<double>* prompt = nullptr) {
  double loss = 0;
  for (const auto& s : corpus) {
    for (double lp : token_logprobs(cfg, p, s, prompt)) loss -= lp;
  }
  return loss;
}

}  // namespace ref
