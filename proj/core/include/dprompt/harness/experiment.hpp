#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dprompt/adaptation/baselines.hpp"
#include "dprompt/adaptation/manifest.hpp"
#include "dprompt/numerics/precision.hpp"
#include "dprompt/rescoring/evaluate.hpp"
#include "dprompt/rescoring/scorer.hpp"

namespace dprompt::harness {

namespace fs = std::filesystem;

struct DomainInput {
  std::string name;
  fs::path corpus;                   // one sentence per line
  fs::path nbest;                    // evaluation lists with references
  std::optional<fs::path> nbest_dev; // held-out lists for tuning the interpolation weights
};

struct MethodConfig {
  adapt::MethodSpec spec;
  std::vector<double> lr_grid;  // empty → the method's default grid
};

struct ExperimentConfig {
  fs::path checkpoint;
  std::vector<DomainInput> domains;
  double split_ratio = 0.8;
  std::vector<MethodConfig> methods;
  lm::TrainHyper hyper;
  rescore::RescoreWeights weights;
  std::vector<double> weight_grid;  // non-empty with nbest_dev → tuned per cell
  rescore::LmScoreMode score_mode = rescore::LmScoreMode::sum;
  std::uint64_t seed = 0;
  fs::path output = "runs/experiment";
  num::Precision precision = num::Precision::f32;
  std::size_t threads = 1;  // scoring threads per cell

  /// Throws std::invalid_argument on a bad ratio, no domains or methods, or a missing path.
  void validate() const;
};

/// Relative paths resolve against base_dir.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const fs::path& base_dir = {});
ExperimentConfig load_experiment_config(const fs::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

struct CellResult {
  std::string domain;
  std::string method;  // MethodSpec::label()
  std::size_t trainable = 0;
  double dev_perplexity = 0;
  double selected_lr = 0;
  long steps = 0;
  rescore::RescoreWeights weights;
  std::string artifact;      // relative to the output directory
  std::string failed_stage;  // empty on success
  std::string error;

  bool ok() const { return failed_stage.empty(); }
};

struct ExperimentResult {
  std::vector<std::string> domains;
  std::vector<std::string> methods;
  std::vector<CellResult> cells;
  std::map<std::string, rescore::EvalReport> reports;  // by domain
  adapt::Manifest manifest;

  const CellResult& cell(const std::string& domain, const std::string& method) const;
};

/// For every (domain, method): split the corpus, train over the learning-rate grid picking the
/// lowest dev perplexity, save the artifact under <output>/<domain>/<method>/, rescore the
/// domain's n-best lists, then evaluate. A failing cell records its stage and the run
/// continues. Writes manifest.json, report.json and report.txt to the output directory.
ExperimentResult run_experiment(const ExperimentConfig& config);

nlohmann::json to_json(const ExperimentResult& result);
/// One row per method with its trainable count and the WERR in each domain, bracketed by the
/// no-rescoring and oracle rows.
std::string format_experiment_table(const ExperimentResult& result);

/// Filesystem-safe name for a method label.
std::string slug(const std::string& label);

}  // namespace dprompt::harness
