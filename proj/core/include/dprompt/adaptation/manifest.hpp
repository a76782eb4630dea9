#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "dprompt/adaptation/baselines.hpp"
#include "dprompt/tokenizer/vocab.hpp"

namespace dprompt::adapt {

struct ManifestEntry {
  std::string domain;
  std::string method;        // MethodSpec::label()
  std::string artifact;      // path relative to the manifest's directory; empty when none
  std::size_t trainable = 0;
  std::string fingerprint;   // of the artifact payload
};

/// {domain → artifact} index written beside the base checkpoint.
struct Manifest {
  std::string base_fingerprint;
  std::vector<ManifestEntry> entries;

  void save(const std::filesystem::path& path) const;
  static Manifest load(const std::filesystem::path& path);
};

/// Writes the artifact under dir (a .dpmt, an adapter blob, a word list, or a checkpoint
/// directory) and returns its manifest entry with the path relative to relative_to.
template <typename T>
ManifestEntry save_artifact(const std::filesystem::path& dir,
                            const std::filesystem::path& relative_to, const std::string& domain,
                            const MethodSpec& spec, const AdaptResult<T>& result,
                            const lm::Model<T>& base, const tok::Vocab& vocab);

/// Every referenced artifact exists and its fingerprint matches. Returns the problems found.
std::vector<std::string> verify_manifest(const std::filesystem::path& manifest_path);

}  // namespace dprompt::adapt
