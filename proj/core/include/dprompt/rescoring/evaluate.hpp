#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dprompt/rescoring/nbest.hpp"
#include "dprompt/rescoring/rescore.hpp"
#include "dprompt/rescoring/wer.hpp"

namespace dprompt::rescore {

/// 100·(base − sys)/base; 0 when the baseline has no errors.
double werr(double baseline_wer, double system_wer);

struct SystemSelections {
  std::string name;
  std::size_t trainable = 0;
  RescoreWeights weights;
  std::vector<Selection> selections;  // one per utterance, in n-best order
};

struct SystemSpec {
  std::string name;
  std::size_t trainable = 0;
  Scorer scorer;
  RescoreWeights weights;
};

struct SystemResult {
  std::string name;
  std::size_t trainable = 0;
  RescoreWeights weights;
  WerCounts counts;
  double wer = 0;
  double werr = 0;
  std::vector<std::size_t> selected;
  std::vector<std::string> failures;  // "utt_id: reason"
};

struct EvalReport {
  std::vector<std::string> utt_ids;
  std::vector<std::string> references;
  WerCounts baseline, oracle;
  double baseline_wer = 0;
  double oracle_wer = 0;
  std::vector<std::size_t> oracle_selected;
  std::vector<SystemResult> systems;

  const SystemResult& system(const std::string& name) const;
};

/// Baseline is the 1-best of each list; oracle is the per-utterance minimum-WER hypothesis
/// (lowest index on ties). Throws std::invalid_argument when any utterance lacks a reference.
EvalReport evaluate(std::span<const NBestList> lists, std::span<const SystemSelections> systems);
EvalReport evaluate(std::span<const NBestList> lists, std::span<const SystemSpec> systems,
                    std::size_t threads = 1);

nlohmann::json to_json(const EvalReport& report);
/// Aligned rows: system, trainable params, WER, WERR; then the no-rescoring and oracle rows.
std::string format_table(const EvalReport& report);

/// Recomputes every WER and WERR from the stored selections and references. Returns the
/// first inconsistency found, or an empty string.
std::string check_consistency(const EvalReport& report, std::span<const NBestList> lists);

}  // namespace dprompt::rescore
