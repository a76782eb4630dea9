#include "dprompt/model/adapters.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "dprompt/util/binary_io.hpp"
#include "dprompt/util/random.hpp"
#include "dprompt/util/sha256.hpp"

namespace dprompt::lm {

std::size_t bottleneck_dim(std::size_t d_model, double reduction) {
  if (!(reduction > 0)) throw std::invalid_argument("adapter reduction factor must be positive");
  const auto b = static_cast<long long>(std::llround(static_cast<double>(d_model) / reduction));
  return static_cast<std::size_t>(std::max<long long>(1, b));
}

std::size_t adapter_parameter_count(const ModelConfig& c, double reduction) {
  const std::size_t d = c.d_model, b = bottleneck_dim(d, reduction);
  return c.n_layers * (2 * d + d * b + b + b * d + d);
}

template <typename T>
std::size_t DomainAdapters<T>::count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Matrix<T>& m) { n += m.size(); });
  return n;
}

template <typename T>
std::vector<std::byte> DomainAdapters<T>::serialize() const {
  std::vector<std::byte> out;
  visit([&](const std::string&, const Matrix<T>& m) { append_f32_le(out, m.values()); });
  return out;
}

template <typename T>
std::string DomainAdapters<T>::fingerprint() const {
  return sha256_hex(serialize());
}

template <typename T>
DomainAdapters<T> init_adapters(const ModelConfig& c, double reduction,
                                const std::string& base_fingerprint, std::uint64_t seed) {
  DomainAdapters<T> a;
  a.reduction = reduction;
  a.bottleneck = bottleneck_dim(c.d_model, reduction);
  a.base_fingerprint = base_fingerprint;
  const std::size_t d = c.d_model, b = a.bottleneck;
  Rng rng = make_rng(seed, "adapter-init");
  std::normal_distribution<double> normal(0.0, 0.02);
  a.layers.resize(c.n_layers);
  for (auto& L : a.layers) {
    L.ln_gain = Matrix<T>(1, d, T{1});
    L.ln_bias = Matrix<T>(1, d);
    L.down_weight = Matrix<T>(d, b);
    for (auto& x : L.down_weight.values()) x = static_cast<T>(normal(rng));
    L.down_bias = Matrix<T>(1, b);
    L.up_weight = Matrix<T>(b, d);
    L.up_bias = Matrix<T>(1, d);
  }
  return a;
}

template <typename T>
void save_adapters(const std::string& path, const DomainAdapters<T>& a) {
  nlohmann::json header{{"format", "dprompt-adapters"},
                        {"reduction", a.reduction},
                        {"bottleneck", a.bottleneck},
                        {"layers", a.layers.size()},
                        {"base_fingerprint", a.base_fingerprint},
                        {"fingerprint", a.fingerprint()}};
  std::string head = header.dump() + "\n";
  std::vector<std::byte> bytes(head.size());
  std::memcpy(bytes.data(), head.data(), head.size());
  auto blob = a.serialize();
  bytes.insert(bytes.end(), blob.begin(), blob.end());
  write_file_bytes(path, bytes);
}

template <typename T>
DomainAdapters<T> load_adapters(const std::string& path, const ModelConfig& c) {
  auto bytes = read_file_bytes(path);
  std::size_t nl = 0;
  while (nl < bytes.size() && bytes[nl] != std::byte{'\n'}) ++nl;
  if (nl == bytes.size()) throw std::runtime_error(path + ": missing adapter header");
  auto header = nlohmann::json::parse(std::string(reinterpret_cast<const char*>(bytes.data()), nl));
  if (header.value("format", "") != "dprompt-adapters") {
    throw std::runtime_error(path + ": not an adapter file");
  }
  auto a = init_adapters<T>(c, header.at("reduction").get<double>(),
                            header.at("base_fingerprint").get<std::string>(), 0);
  if (a.bottleneck != header.at("bottleneck").get<std::size_t>() ||
      a.layers.size() != header.at("layers").get<std::size_t>()) {
    throw std::runtime_error(path + ": adapter shape does not match model config");
  }
  std::size_t offset = nl + 1;
  a.visit([&](const std::string&, Matrix<T>& m) {
    auto vals = read_f32_le<T>(bytes, offset, m.size());
    std::copy(vals.begin(), vals.end(), m.values().begin());
    offset += m.size() * 4;
  });
  if (offset != bytes.size()) throw std::runtime_error(path + ": trailing bytes in adapter blob");
  if (header.contains("fingerprint") && header["fingerprint"] != a.fingerprint()) {
    throw std::runtime_error(path + ": adapter fingerprint mismatch");
  }
  return a;
}

template struct DomainAdapters<float>;
template struct DomainAdapters<double>;
template DomainAdapters<float> init_adapters<float>(const ModelConfig&, double, const std::string&,
                                                    std::uint64_t);
template DomainAdapters<double> init_adapters<double>(const ModelConfig&, double,
                                                     const std::string&, std::uint64_t);
template void save_adapters<float>(const std::string&, const DomainAdapters<float>&);
template void save_adapters<double>(const std::string&, const DomainAdapters<double>&);
template DomainAdapters<float> load_adapters<float>(const std::string&, const ModelConfig&);
template DomainAdapters<double> load_adapters<double>(const std::string&, const ModelConfig&);

}  // namespace dprompt::lm
