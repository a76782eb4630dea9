#include "dprompt/model/parameters.hpp"

#include <random>
#include <stdexcept>

#include "dprompt/util/binary_io.hpp"
#include "dprompt/util/random.hpp"
#include "dprompt/util/sha256.hpp"

namespace dprompt::lm {

template <typename T>
Parameters<T> zero_parameters(const ModelConfig& c) {
  c.validate();
  const std::size_t d = c.d_model, f = c.d_ff;
  Parameters<T> p;
  p.token_embedding = Matrix<T>(c.vocab_size, d);
  p.position_embedding = Matrix<T>(c.max_positions, d);
  p.layers.resize(c.n_layers);
  for (auto& L : p.layers) {
    L.ln1_gain = Matrix<T>(1, d, T{1});
    L.ln1_bias = Matrix<T>(1, d);
    L.q_weight = Matrix<T>(d, d);
    L.q_bias = Matrix<T>(1, d);
    L.k_weight = Matrix<T>(d, d);
    L.k_bias = Matrix<T>(1, d);
    L.v_weight = Matrix<T>(d, d);
    L.v_bias = Matrix<T>(1, d);
    L.out_weight = Matrix<T>(d, d);
    L.out_bias = Matrix<T>(1, d);
    L.ln2_gain = Matrix<T>(1, d, T{1});
    L.ln2_bias = Matrix<T>(1, d);
    L.fc_weight = Matrix<T>(d, f);
    L.fc_bias = Matrix<T>(1, f);
    L.fc_out_weight = Matrix<T>(f, d);
    L.fc_out_bias = Matrix<T>(1, d);
  }
  p.final_gain = Matrix<T>(1, d, T{1});
  p.final_bias = Matrix<T>(1, d);
  return p;
}

template <typename T>
Parameters<T> init_parameters(const ModelConfig& c) {
  Parameters<T> p = zero_parameters<T>(c);
  Rng rng = make_rng(c.seed, "init");
  std::normal_distribution<double> normal(0.0, 0.02);
  p.visit([&](const std::string& name, Matrix<T>& m, TensorGroup) {
    const bool is_vector = m.rows() == 1;  // norms and biases keep their defaults
    if (is_vector) return;
    (void)name;
    for (auto& x : m.values()) x = static_cast<T>(normal(rng));
  });
  return p;
}

template <typename T>
std::size_t Parameters<T>::count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Matrix<T>& m, TensorGroup) { n += m.size(); });
  return n;
}

template <typename T>
std::vector<std::byte> Parameters<T>::serialize() const {
  std::vector<std::byte> out;
  out.reserve(count() * 4);
  visit([&](const std::string&, const Matrix<T>& m, TensorGroup) { append_f32_le(out, m.values()); });
  return out;
}

template <typename T>
std::vector<std::byte> Parameters<T>::serialize(TensorGroup group) const {
  std::vector<std::byte> out;
  visit([&](const std::string&, const Matrix<T>& m, TensorGroup g) {
    if (g == group) append_f32_le(out, m.values());
  });
  return out;
}

template <typename T>
Parameters<T> Parameters<T>::deserialize(const ModelConfig& config,
                                         std::span<const std::byte> blob) {
  Parameters<T> p = zero_parameters<T>(config);
  if (blob.size() != p.count() * 4) {
    throw std::runtime_error("parameter blob has " + std::to_string(blob.size()) +
                             " bytes, config implies " + std::to_string(p.count() * 4));
  }
  std::size_t offset = 0;
  p.visit([&](const std::string&, Matrix<T>& m, TensorGroup) {
    auto vals = read_f32_le<T>(blob, offset, m.size());
    std::copy(vals.begin(), vals.end(), m.values().begin());
    offset += m.size() * 4;
  });
  return p;
}

template <typename T>
std::string fingerprint(const Parameters<T>& params) {
  return sha256_hex(params.serialize());
}

template <typename T>
std::string group_hash(const Parameters<T>& params, TensorGroup group) {
  std::vector<std::byte> raw;
  params.visit([&](const std::string&, const Matrix<T>& m, TensorGroup g) {
    if (g != group) return;
    auto bytes = std::as_bytes(m.values());
    raw.insert(raw.end(), bytes.begin(), bytes.end());
  });
  return sha256_hex(raw);
}

template struct Parameters<float>;
template struct Parameters<double>;
template Parameters<float> init_parameters<float>(const ModelConfig&);
template Parameters<double> init_parameters<double>(const ModelConfig&);
template Parameters<float> zero_parameters<float>(const ModelConfig&);
template Parameters<double> zero_parameters<double>(const ModelConfig&);
template std::string fingerprint<float>(const Parameters<float>&);
template std::string fingerprint<double>(const Parameters<double>&);
template std::string group_hash<float>(const Parameters<float>&, TensorGroup);
template std::string group_hash<double>(const Parameters<double>&, TensorGroup);

}  // namespace dprompt::lm
