#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dprompt/rescoring/nbest.hpp"
#include "dprompt/util/random.hpp"

namespace dprompt::harness {

/// How first-pass n-best lists are faked from a reference sentence.
struct CorruptionModel {
  double swap_probability = 0.15;  // per word with an entry in `confusables`
  std::map<std::string, std::vector<std::string>> confusables;
  double score_noise = 1.0;        // std-dev of the Gaussian noise on each score
  double am_edit_penalty = 0.6;    // expected AM score lost per word error
  double flm_edit_penalty = 0.4;   // expected first-pass LM score lost per word error
  std::size_t nbest = 10;
  double truth_missing_rate = 0.05;  // share of lists whose reference is left out
};

/// Templates use {slot} placeholders; every placeholder needs a value list.
struct SyntheticDomainSpec {
  std::string name;
  std::vector<std::string> templates;
  std::map<std::string, std::vector<std::string>> slots;
  std::size_t sentences = 1000;      // text corpus size
  std::size_t eval_utterances = 200; // n-best lists
  CorruptionModel corruption;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on no templates, no slots at all, an unknown or empty slot,
  /// or a swap probability outside [0, 1].
  void validate() const;
};

struct SyntheticDomain {
  std::string name;
  std::vector<std::string> corpus;
  std::vector<rescore::NBestList> nbest;  // references set, sorted by first-pass score
};

SyntheticDomain synthesize_domain(const SyntheticDomainSpec& spec);

/// Fills one random template.
std::string sample_sentence(const SyntheticDomainSpec& spec, Rng& rng);

std::vector<std::string> builtin_domains();  // airlines, fastfood, healthcare, insurance

/// A built-in task-oriented domain. Confusables pair its slot words with words other domains use
/// in the same slot, plus a shared homophone table.
SyntheticDomainSpec builtin_domain(const std::string& name, std::size_t sentences = 1000,
                                   std::uint64_t seed = 0);

/// General chit-chat with the same homophone table and no domain slots.
SyntheticDomainSpec generic_spec(std::size_t sentences, std::uint64_t seed = 0);

/// Pretraining text: generic sentences plus a slice of every built-in domain, drawn from
/// sub-streams disjoint from the ones synthesize_domain uses for the same seed.
std::vector<std::string> pretraining_pool(std::uint64_t seed, std::size_t generic_sentences = 3000,
                                          std::size_t per_domain = 500);

/// Writes <dir>/<name>.txt and <dir>/<name>.nbest.jsonl.
void write_synthetic(const std::filesystem::path& dir, const SyntheticDomain& domain);

/// "low" → 1,000 sentences, "large" → 50,000.
std::size_t size_for(const std::string& setting);

}  // namespace dprompt::harness
