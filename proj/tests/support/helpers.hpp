#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "dprompt/model/config.hpp"
#include "dprompt/model/model.hpp"
#include "dprompt/model/parameters.hpp"
#include "dprompt/numerics/matrix.hpp"

namespace testing {

inline dprompt::lm::ModelConfig tiny_config(std::size_t layers = 2, std::size_t d = 16, std::size_t vocab = 24,
                                            std::size_t heads = 2) {
  dprompt::lm::ModelConfig c;
  c.n_layers = layers;
  c.n_heads = heads;
  c.d_model = d;
  c.d_ff = 2 * d;
  c.vocab_size = vocab;
  c.max_positions = 64;
  c.dropout = 0.0;
  c.seed = 7;
  return c;
}

template <typename T>
dprompt::num::Matrix<T> random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  dprompt::num::Matrix<T> m(rows, cols);
  for (auto& x : m.values()) x = static_cast<T>(n(rng));
  return m;
}

/// Random weights everywhere, including norms and biases, so no term is trivially zero.
template <typename T>
dprompt::lm::Parameters<T> random_parameters(const dprompt::lm::ModelConfig& c, std::uint64_t seed, double scale = 0.3) {
  auto p = dprompt::lm::init_parameters<T>(c);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  p.visit([&](const std::string& name, dprompt::num::Matrix<T>& m, dprompt::lm::TensorGroup) {
    const bool gain = name.find("gain") != std::string::npos;
    for (auto& x : m.values()) x = static_cast<T>(gain ? 1.0 + n(rng) : n(rng));
  });
  return p;
}

inline std::vector<std::int32_t> random_ids(std::size_t n, std::size_t vocab, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::int32_t> ids(n);
  for (auto& id : ids) id = static_cast<std::int32_t>(3 + rng() % (vocab - 3));
  return ids;
}

inline double rel_diff(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0 ? 0 : std::abs(a - b) / scale;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("dprompt-test-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing
