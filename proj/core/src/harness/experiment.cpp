#include "dprompt/harness/experiment.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dprompt/harness/corpus.hpp"
#include "dprompt/model/checkpoint.hpp"
#include "dprompt/util/random.hpp"

namespace dprompt::harness {

using nlohmann::json;

void ExperimentConfig::validate() const {
  if (!(split_ratio > 0 && split_ratio < 1)) throw std::invalid_argument("split_ratio must lie in (0, 1)");
  if (domains.empty()) throw std::invalid_argument("experiment has no domains");
  if (methods.empty()) throw std::invalid_argument("experiment has no methods");
  weights.validate();
  if (!fs::exists(checkpoint)) throw std::invalid_argument("checkpoint " + checkpoint.string() + " does not exist");
  for (const auto& d : domains) {
    if (d.name.empty()) throw std::invalid_argument("domain without a name");
    for (const auto* p : {&d.corpus, &d.nbest}) {
      if (!fs::exists(*p)) throw std::invalid_argument("domain " + d.name + ": " + p->string() + " does not exist");
    }
    if (d.nbest_dev && !fs::exists(*d.nbest_dev)) {
      throw std::invalid_argument("domain " + d.name + ": " + d.nbest_dev->string() + " does not exist");
    }
  }
}

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

rescore::RescoreWeights weights_from_json(const json& j) {
  return rescore::RescoreWeights{j.value("am", 1.0), j.value("flm", 1.0), j.value("lm", 1.0)};
}

json weights_json(const rescore::RescoreWeights& w) { return {{"am", w.am}, {"flm", w.flm}, {"lm", w.lm}}; }

}  // namespace

ExperimentConfig experiment_config_from_json(const json& j, const fs::path& base_dir) {
  ExperimentConfig c;
  c.checkpoint = resolve(base_dir, j.at("checkpoint").get<std::string>());
  for (const auto& d : j.at("domains")) {
    DomainInput in;
    in.name = d.at("name").get<std::string>();
    in.corpus = resolve(base_dir, d.at("corpus").get<std::string>());
    in.nbest = resolve(base_dir, d.at("nbest").get<std::string>());
    if (d.contains("nbest_dev")) in.nbest_dev = resolve(base_dir, d.at("nbest_dev").get<std::string>());
    c.domains.push_back(std::move(in));
  }
  c.split_ratio = j.value("split_ratio", 0.8);
  for (const auto& m : j.at("methods")) {
    MethodConfig mc;
    if (m.is_string()) {
      mc.spec.method = adapt::parse_method(m.get<std::string>());
    } else {
      mc.spec.method = adapt::parse_method(m.at("method").get<std::string>());
      mc.spec.k = m.value("k", mc.spec.k);
      mc.spec.init = adapt::parse_prompt_init(m.value("init", std::string("vocab")));
      mc.spec.reduction = m.value("reduction", mc.spec.reduction);
      mc.lr_grid = m.value("lr_grid", std::vector<double>{});
    }
    c.methods.push_back(std::move(mc));
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    c.hyper.epochs = t.value("epochs", c.hyper.epochs);
    c.hyper.batch_tokens = t.value("batch_tokens", c.hyper.batch_tokens);
    c.hyper.patience = t.value("patience", c.hyper.patience);
  }
  if (j.contains("weights")) c.weights = weights_from_json(j.at("weights"));
  c.weight_grid = j.value("weight_grid", std::vector<double>{});
  const auto mode = j.value("score_mode", std::string("sum"));
  if (mode == "sum") {
    c.score_mode = rescore::LmScoreMode::sum;
  } else if (mode == "per_token" || mode == "per-token") {
    c.score_mode = rescore::LmScoreMode::per_token;
  } else {
    throw std::invalid_argument("score_mode must be sum or per_token");
  }
  c.seed = j.value("seed", std::uint64_t{0});
  c.output = resolve(base_dir, j.value("output", std::string("runs/experiment")));
  c.precision = num::parse_precision(j.value("precision", std::string("f32")));
  c.threads = j.value("threads", std::size_t{1});
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open experiment config " + path.string());
  return experiment_config_from_json(json::parse(in), path.parent_path());
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["checkpoint"] = c.checkpoint.string();
  j["domains"] = json::array();
  for (const auto& d : c.domains) {
    json dj{{"name", d.name}, {"corpus", d.corpus.string()}, {"nbest", d.nbest.string()}};
    if (d.nbest_dev) dj["nbest_dev"] = d.nbest_dev->string();
    j["domains"].push_back(dj);
  }
  j["split_ratio"] = c.split_ratio;
  j["methods"] = json::array();
  for (const auto& m : c.methods) {
    j["methods"].push_back({{"method", adapt::to_string(m.spec.method)},
                            {"k", m.spec.k},
                            {"init", adapt::to_string(m.spec.init)},
                            {"reduction", m.spec.reduction},
                            {"lr_grid", m.lr_grid}});
  }
  j["train"] = {{"epochs", c.hyper.epochs}, {"batch_tokens", c.hyper.batch_tokens}, {"patience", c.hyper.patience}};
  j["weights"] = weights_json(c.weights);
  j["weight_grid"] = c.weight_grid;
  j["score_mode"] = c.score_mode == rescore::LmScoreMode::sum ? "sum" : "per_token";
  j["seed"] = c.seed;
  j["output"] = c.output.string();
  j["precision"] = num::to_string(c.precision);
  j["threads"] = c.threads;
  return j;
}

const CellResult& ExperimentResult::cell(const std::string& domain, const std::string& method) const {
  for (const auto& c : cells) {
    if (c.domain == domain && c.method == method) return c;
  }
  throw std::out_of_range("no cell " + domain + " / " + method);
}

std::string slug(const std::string& label) {
  std::string out;
  for (char ch : label) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      out.push_back(static_cast<char>(std::tolower(c)));
    } else if (ch == '.') {
      out.push_back('p');
    } else if (!out.empty() && out.back() != '-') {
      out.push_back('-');
    }
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out;
}

namespace {

struct StageError : std::runtime_error {
  StageError(std::string stage, const std::string& what) : std::runtime_error(what), stage(std::move(stage)) {}
  std::string stage;
};

template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

std::vector<tok::TokenSequence> encode_all(const tok::Vocab& vocab, std::span<const std::string> lines) {
  std::vector<tok::TokenSequence> out;
  out.reserve(lines.size());
  for (const auto& l : lines) out.push_back(vocab.encode(l));
  return out;
}

struct DomainData {
  std::vector<std::string> train_text;
  std::vector<tok::TokenSequence> train, dev;
  std::vector<rescore::NBestList> nbest;
  std::optional<std::vector<rescore::NBestList>> nbest_dev;
};

void write_outputs(const ExperimentConfig& config, const ExperimentResult& result) {
  fs::create_directories(config.output);
  result.manifest.save(config.output / "manifest.json");
  std::ofstream(config.output / "report.json") << to_json(result).dump(2) << '\n';
  std::ofstream(config.output / "report.txt") << format_experiment_table(result);
}

template <typename T>
ExperimentResult run_typed(const ExperimentConfig& config) {
  config.validate();
  const auto ckpt = stage("load-checkpoint", [&] { return lm::load_checkpoint<T>(config.checkpoint); });
  const lm::Model<T>& model = ckpt.model;
  const tok::Vocab& vocab = ckpt.vocab;

  ExperimentResult result;
  result.manifest.base_fingerprint = model.fingerprint();
  for (const auto& m : config.methods) result.methods.push_back(m.spec.label());

  for (const auto& domain : config.domains) {
    result.domains.push_back(domain.name);
    DomainData data;
    std::string domain_stage, domain_error;
    try {
      const auto lines = stage("load-corpus", [&] { return read_lines(domain.corpus); });
      const auto split = stage("split", [&] {
        return split_corpus(lines, config.split_ratio, substream_seed(config.seed, "split/" + domain.name));
      });
      data.train_text = split.train;
      data.train = encode_all(vocab, split.train);
      data.dev = encode_all(vocab, split.dev);
      data.nbest = stage("load-nbest", [&] { return rescore::load_nbest(domain.nbest); });
      if (domain.nbest_dev) {
        data.nbest_dev = stage("load-nbest", [&] { return rescore::load_nbest(*domain.nbest_dev); });
      }
    } catch (const StageError& e) {
      domain_stage = e.stage;
      domain_error = e.what();
    }

    std::vector<rescore::SystemSelections> systems;
    for (const auto& method : config.methods) {
      CellResult cell;
      cell.domain = domain.name;
      cell.method = method.spec.label();
      cell.weights = config.weights;
      if (!domain_stage.empty()) {
        cell.failed_stage = domain_stage;
        cell.error = domain_error;
        result.cells.push_back(std::move(cell));
        continue;
      }
      try {
        adapt::AdaptJob job;
        job.domain = domain.name;
        job.spec = method.spec;
        job.hyper = config.hyper;
        job.hyper.seed = substream_seed(config.seed, "cell/" + domain.name + "/" + cell.method);
        job.lr_grid = method.lr_grid;
        const auto adapted = stage("train", [&] {
          return adapt::train_baseline(model, vocab, data.train_text, data.train, data.dev, job);
        });
        cell.trainable = adapted.trainable;
        cell.dev_perplexity = adapted.dev_perplexity;
        cell.selected_lr = adapted.selected_lr;
        cell.steps = adapted.history.steps;

        const fs::path cell_dir = config.output / slug(domain.name) / slug(cell.method);
        const auto entry = stage("save-artifact", [&] {
          return adapt::save_artifact(cell_dir, config.output, domain.name, method.spec, adapted, model, vocab);
        });
        cell.artifact = entry.artifact;

        const auto scorer = stage("build-scorer", [&] {
          return rescore::make_scorer(model, vocab, adapted.artifact, rescore::ScorerOptions{config.score_mode, true});
        });
        if (data.nbest_dev && !config.weight_grid.empty()) {
          cell.weights = stage("tune-weights", [&] {
            const auto scores = rescore::score_nbest(*data.nbest_dev, scorer, config.threads);
            return rescore::tune_weights(*data.nbest_dev, scores, config.weight_grid, config.weights);
          });
        }
        auto chosen = stage("rescore", [&] {
          return rescore::rescore(data.nbest, scorer, cell.weights, config.threads);
        });
        systems.push_back(rescore::SystemSelections{cell.method, cell.trainable, cell.weights, std::move(chosen)});
        result.manifest.entries.push_back(entry);
      } catch (const StageError& e) {
        cell.failed_stage = e.stage;
        cell.error = e.what();
      }
      result.cells.push_back(std::move(cell));
    }
    if (domain_stage.empty()) {
      try {
        result.reports.emplace(domain.name, stage("evaluate", [&] { return rescore::evaluate(data.nbest, systems); }));
      } catch (const StageError& e) {
        for (auto& c : result.cells) {
          if (c.domain == domain.name && c.ok()) {
            c.failed_stage = e.stage;
            c.error = e.what();
          }
        }
      }
    }
  }
  write_outputs(config, result);
  return result;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  return num::dispatch(config.precision, [&]<typename T>() { return run_typed<T>(config); });
}

json to_json(const ExperimentResult& result) {
  json j;
  j["domains"] = result.domains;
  j["methods"] = result.methods;
  j["cells"] = json::array();
  for (const auto& c : result.cells) {
    json cj{{"domain", c.domain},
            {"method", c.method},
            {"trainable_params", c.trainable},
            {"dev_perplexity", c.dev_perplexity},
            {"selected_lr", c.selected_lr},
            {"steps", c.steps},
            {"weights", weights_json(c.weights)},
            {"artifact", c.artifact}};
    if (!c.ok()) cj["failure"] = {{"stage", c.failed_stage}, {"error", c.error}};
    j["cells"].push_back(cj);
  }
  j["reports"] = json::object();
  for (const auto& [domain, report] : result.reports) j["reports"][domain] = rescore::to_json(report);
  return j;
}

std::string format_experiment_table(const ExperimentResult& result) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"method", "trainable"};
  for (const auto& d : result.domains) header.push_back("WERR% " + d);
  rows.push_back(header);

  auto pct = [](double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", x);
    return std::string(buf);
  };
  std::vector<std::string> base{"no-rescoring", "-"};
  for (const auto& d : result.domains) base.push_back(result.reports.contains(d) ? pct(0.0) : "n/a");
  rows.push_back(base);

  for (const auto& m : result.methods) {
    std::vector<std::string> row{m, "-"};
    for (const auto& d : result.domains) {
      const auto& c = result.cell(d, m);
      if (!c.ok()) {
        row.push_back("failed:" + c.failed_stage);
        continue;
      }
      if (row[1] == "-") row[1] = std::to_string(c.trainable);
      row.push_back(pct(result.reports.at(d).system(m).werr));
    }
    rows.push_back(row);
  }
  std::vector<std::string> oracle{"oracle", "-"};
  for (const auto& d : result.domains) {
    if (!result.reports.contains(d)) {
      oracle.push_back("n/a");
      continue;
    }
    const auto& r = result.reports.at(d);
    oracle.push_back(pct(rescore::werr(r.baseline_wer, r.oracle_wer)));
  }
  rows.push_back(oracle);

  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  }
  std::ostringstream out;
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i == 0) {
        out << r[i] << std::string(width[i] - r[i].size(), ' ');
      } else {
        out << "  " << std::string(width[i] - r[i].size(), ' ') << r[i];
      }
    }
    out << '\n';
  }
  out << '\n';
  for (const auto& d : result.domains) {
    if (!result.reports.contains(d)) continue;
    const auto& r = result.reports.at(d);
    out << d << ": baseline WER " << pct(100 * r.baseline_wer) << "%, oracle WER " << pct(100 * r.oracle_wer)
        << "%, " << r.utt_ids.size() << " utterances\n";
  }
  for (const auto& c : result.cells) {
    if (!c.ok()) out << "failed " << c.domain << " / " << c.method << " at " << c.failed_stage << ": " << c.error << '\n';
  }
  return out.str();
}

}  // namespace dprompt::harness
