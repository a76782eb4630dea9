#include "dprompt/model/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "dprompt/util/binary_io.hpp"
#include "dprompt/util/errors.hpp"
#include "dprompt/util/sha256.hpp"

namespace dprompt::lm {

namespace fs = std::filesystem;

template <typename T>
void save_checkpoint(const fs::path& dir, const Model<T>& model, const tok::Vocab& vocab) {
  fs::create_directories(dir);
  if (vocab.size() != model.config().vocab_size) {
    throw std::invalid_argument("vocabulary size " + std::to_string(vocab.size()) +
                                " does not match model vocab_size " +
                                std::to_string(model.config().vocab_size));
  }
  nlohmann::json layout = nlohmann::json::array();
  model.params().visit([&](const std::string& name, const Matrix<T>& m, TensorGroup g) {
    layout.push_back({{"name", name},
                      {"shape", {m.rows(), m.cols()}},
                      {"group", g == TensorGroup::embedding ? "embedding" : "transformer"}});
  });
  nlohmann::json cfg{{"format", "dprompt-checkpoint"},
                     {"config", model.config()},
                     {"dtype", "float32-le"},
                     {"layout", layout}};
  std::ofstream(dir / "config.json") << cfg.dump(2) << '\n';
  const auto blob = model.params().serialize();
  write_file_bytes((dir / "params.bin").string(), blob);
  vocab.save(dir / "vocab.txt");
  std::ofstream(dir / "fingerprint") << sha256_hex(blob) << '\n';
}

ModelConfig load_checkpoint_config(const fs::path& dir) {
  std::ifstream in(dir / "config.json");
  if (!in) throw std::runtime_error("no checkpoint config at " + (dir / "config.json").string());
  const auto j = nlohmann::json::parse(in);
  return j.at("config").get<ModelConfig>();
}

template <typename T>
Checkpoint<T> load_checkpoint(const fs::path& dir) {
  const ModelConfig config = load_checkpoint_config(dir);
  const auto blob = read_file_bytes((dir / "params.bin").string());
  const std::string actual = sha256_hex(blob);
  std::ifstream fp(dir / "fingerprint");
  std::string stored;
  if (fp >> stored && stored != actual) throw FingerprintMismatch("checkpoint", stored, actual);
  auto params = Parameters<T>::deserialize(config, blob);
  tok::Vocab vocab = tok::Vocab::load(dir / "vocab.txt");
  if (vocab.size() != config.vocab_size) {
    throw std::runtime_error("checkpoint vocabulary has " + std::to_string(vocab.size()) +
                             " entries, config says " + std::to_string(config.vocab_size));
  }
  return Checkpoint<T>{Model<T>(config, std::move(params)), std::move(vocab)};
}

template void save_checkpoint<float>(const fs::path&, const Model<float>&, const tok::Vocab&);
template void save_checkpoint<double>(const fs::path&, const Model<double>&, const tok::Vocab&);
template Checkpoint<float> load_checkpoint<float>(const fs::path&);
template Checkpoint<double> load_checkpoint<double>(const fs::path&);

}  // namespace dprompt::lm
