#include "dprompt/adaptation/manifest.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "dprompt/model/checkpoint.hpp"
#include "dprompt/util/binary_io.hpp"
#include "dprompt/util/sha256.hpp"

namespace dprompt::adapt {

namespace fs = std::filesystem;

void Manifest::save(const fs::path& path) const {
  nlohmann::json j;
  j["base_fingerprint"] = base_fingerprint;
  j["entries"] = nlohmann::json::array();
  for (const auto& e : entries) {
    j["entries"].push_back({{"domain", e.domain},
                            {"method", e.method},
                            {"artifact", e.artifact},
                            {"trainable_params", e.trainable},
                            {"fingerprint", e.fingerprint}});
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream(path) << j.dump(2) << '\n';
}

Manifest Manifest::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  const auto j = nlohmann::json::parse(in);
  Manifest m;
  m.base_fingerprint = j.value("base_fingerprint", "");
  for (const auto& e : j.at("entries")) {
    m.entries.push_back(ManifestEntry{e.at("domain"), e.at("method"), e.value("artifact", ""),
                                      e.value("trainable_params", std::size_t{0}),
                                      e.value("fingerprint", "")});
  }
  return m;
}

namespace {

std::string word_list_fingerprint(const std::vector<std::string>& words) {
  std::string joined;
  for (const auto& w : words) joined += w + "\n";
  return sha256_hex(joined);
}

std::string artifact_fingerprint(const fs::path& path) {
  if (fs::is_directory(path)) {
    std::ifstream in(path / "fingerprint");
    std::string fp;
    in >> fp;
    return fp;
  }
  const auto bytes = read_file_bytes(path.string());
  std::size_t nl = 0;
  while (nl < bytes.size() && bytes[nl] != std::byte{'\n'}) ++nl;
  if (path.extension() == ".words") {
    return sha256_hex(std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  }
  // .dpmt / .adpt: JSON header line followed by the binary32 payload.
  if (nl + 1 > bytes.size()) return {};
  return sha256_hex(std::span<const std::byte>(bytes).subspan(nl + 1));
}

}  // namespace

template <typename T>
ManifestEntry save_artifact(const fs::path& dir, const fs::path& relative_to,
                            const std::string& domain, const MethodSpec& spec,
                            const AdaptResult<T>& result, const lm::Model<T>& base,
                            const tok::Vocab& vocab) {
  fs::create_directories(dir);
  ManifestEntry e;
  e.domain = domain;
  e.method = spec.label();
  e.trainable = result.trainable;
  fs::path written;
  if (const auto* p = std::get_if<DomainPrompt<T>>(&result.artifact)) {
    written = dir / "prompt.dpmt";
    save_prompt(written, *p);
    e.fingerprint = prompt_fingerprint(*p);
  } else if (const auto* a = std::get_if<lm::DomainAdapters<T>>(&result.artifact)) {
    written = dir / "adapters.adpt";
    lm::save_adapters(written.string(), *a);
    e.fingerprint = a->fingerprint();
  } else if (const auto* f = std::get_if<FixedPrompt>(&result.artifact)) {
    written = dir / "prompt.words";
    std::ofstream out(written);
    for (const auto& w : f->words) out << w << '\n';
    e.fingerprint = word_list_fingerprint(f->words);
  } else if (const auto* params = std::get_if<lm::Parameters<T>>(&result.artifact)) {
    written = dir / "checkpoint";
    const lm::Model<T> adapted(base.config(), *params);
    lm::save_checkpoint(written, adapted, vocab);
    e.fingerprint = adapted.fingerprint();
  }
  if (!written.empty()) e.artifact = fs::relative(written, relative_to).generic_string();
  return e;
}

std::vector<std::string> verify_manifest(const fs::path& manifest_path) {
  std::vector<std::string> problems;
  const Manifest m = Manifest::load(manifest_path);
  const fs::path root = manifest_path.parent_path();
  for (const auto& e : m.entries) {
    if (e.artifact.empty()) continue;
    const fs::path p = root / e.artifact;
    if (!fs::exists(p)) {
      problems.push_back(e.domain + "/" + e.method + ": missing " + p.string());
      continue;
    }
    if (artifact_fingerprint(p) != e.fingerprint) {
      problems.push_back(e.domain + "/" + e.method + ": fingerprint mismatch for " + p.string());
    }
  }
  return problems;
}

template ManifestEntry save_artifact<float>(const fs::path&, const fs::path&, const std::string&,
                                            const MethodSpec&, const AdaptResult<float>&,
                                            const lm::Model<float>&, const tok::Vocab&);
template ManifestEntry save_artifact<double>(const fs::path&, const fs::path&, const std::string&,
                                             const MethodSpec&, const AdaptResult<double>&,
                                             const lm::Model<double>&, const tok::Vocab&);

}  // namespace dprompt::adapt
