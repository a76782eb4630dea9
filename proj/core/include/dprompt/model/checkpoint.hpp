#pragma once

#include <filesystem>

#include "dprompt/model/model.hpp"
#include "dprompt/tokenizer/vocab.hpp"

namespace dprompt::lm {

/// Checkpoint directory layout:
///   config.json     model config plus the tensor layout (name and shape, in blob order)
///   params.bin      every tensor as little-endian binary32, in Parameters::visit order
///   vocab.txt       one token per line, line i = id i + 3
///   fingerprint     SHA-256 of params.bin
template <typename T>
void save_checkpoint(const std::filesystem::path& dir, const Model<T>& model, const tok::Vocab& vocab);

template <typename T>
struct Checkpoint {
  Model<T> model;
  tok::Vocab vocab;
};

/// Verifies the stored fingerprint against params.bin.
template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& dir);

/// Reads only config.json.
ModelConfig load_checkpoint_config(const std::filesystem::path& dir);

}  // namespace dprompt::lm
