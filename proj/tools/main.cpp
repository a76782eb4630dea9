#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dprompt/adaptation/baselines.hpp"
#include "dprompt/adaptation/manifest.hpp"
#include "dprompt/adaptation/prompt.hpp"
#include "dprompt/harness/backbone.hpp"
#include "dprompt/harness/corpus.hpp"
#include "dprompt/harness/experiment.hpp"
#include "dprompt/harness/synthetic.hpp"
#include "dprompt/model/checkpoint.hpp"
#include "dprompt/numerics/precision.hpp"
#include "dprompt/rescoring/evaluate.hpp"
#include "dprompt/rescoring/scorer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dprompt;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::string precision = "f32";
  std::string config;

  num::Precision prec() const { return num::parse_precision(precision); }
};

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return json::parse(in);
}

std::vector<tok::TokenSequence> encode_all(const tok::Vocab& vocab, const std::vector<std::string>& lines) {
  std::vector<tok::TokenSequence> out;
  for (const auto& l : lines) out.push_back(vocab.encode(l));
  return out;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

rescore::RescoreWeights parse_weights(const std::string& s) {
  const auto v = parse_list(s);
  if (v.size() != 3) throw std::invalid_argument("--weights expects am,flm,lm");
  rescore::RescoreWeights w{v[0], v[1], v[2]};
  w.validate();
  return w;
}

// ---- artifact selection shared by score / generate / rescore -----------------------------------

struct ArtifactArgs {
  std::string prompt, adapters, fixed_words, adapted_checkpoint;

  void add(CLI::App* cmd) {
    auto* p = cmd->add_option("--prompt", prompt, "learned domain prompt (.dpmt)");
    auto* a = cmd->add_option("--adapters", adapters, "adapter blob");
    auto* f = cmd->add_option("--fixed-words", fixed_words, "word list used as a fixed prompt");
    auto* c = cmd->add_option("--adapted-checkpoint", adapted_checkpoint,
                              "checkpoint of an embedding-tuned or fully fine-tuned model");
    p->excludes(a)->excludes(f)->excludes(c);
    a->excludes(f)->excludes(c);
    f->excludes(c);
  }

  template <typename T>
  adapt::Artifact<T> load(const lm::Model<T>& model) const {
    if (!prompt.empty()) return adapt::load_prompt<T>(prompt);
    if (!adapters.empty()) return lm::load_adapters<T>(adapters, model.config());
    if (!fixed_words.empty()) return adapt::FixedPrompt{harness::read_lines(fixed_words)};
    if (!adapted_checkpoint.empty()) {
      auto ck = lm::load_checkpoint<T>(adapted_checkpoint);
      if (!(ck.model.config() == model.config())) {
        throw std::invalid_argument("adapted checkpoint has a different shape from the base");
      }
      return ck.model.params();
    }
    return std::monostate{};
  }
};

// ---- pretrain ---------------------------------------------------------------------------------

struct PretrainArgs {
  std::vector<std::string> corpora;
  bool synthetic_pool = false;
  std::size_t generic = 3000, per_domain = 500;
  std::string out;
  std::size_t epochs = 8, batch_tokens = 256;
  double lr = 3e-3;
  bool no_position_shift = false;
};

int run_pretrain(const Globals& g, const PretrainArgs& a) {
  lm::ModelConfig config;
  if (!g.config.empty()) {
    json merged;
    lm::to_json(merged, config);
    merged.merge_patch(read_json(g.config));
    lm::from_json(merged, config);
  }
  config.seed = g.seed;
  std::vector<std::string> lines;
  for (const auto& c : a.corpora) {
    auto more = harness::read_lines(c);
    lines.insert(lines.end(), more.begin(), more.end());
  }
  if (a.synthetic_pool) {
    auto pool = harness::pretraining_pool(g.seed, a.generic, a.per_domain);
    lines.insert(lines.end(), pool.begin(), pool.end());
  }
  if (lines.empty()) throw std::invalid_argument("pretrain: give --corpus or --synthetic-pool");
  lm::TrainHyper hyper;
  hyper.lr = a.lr;
  hyper.epochs = a.epochs;
  hyper.batch_tokens = a.batch_tokens;
  hyper.seed = g.seed;
  hyper.shift_positions = !a.no_position_shift;
  return num::dispatch(g.prec(), [&]<typename T>() {
    auto backbone = harness::pretrain_backbone<T>(lines, config, hyper);
    lm::save_checkpoint(a.out, backbone.checkpoint.model, backbone.checkpoint.vocab);
    for (std::size_t e = 0; e < backbone.history.epoch_losses.size(); ++e) {
      std::printf("epoch %zu  mean token nll %.4f\n", e + 1, backbone.history.epoch_losses[e]);
    }
    std::printf("saved %s  (V=%zu, %zu parameters, fingerprint %s)\n", a.out.c_str(),
                backbone.checkpoint.model.config().vocab_size,
                backbone.checkpoint.model.config().parameter_count(),
                backbone.checkpoint.model.fingerprint().c_str());
    return 0;
  });
}

// ---- synth ------------------------------------------------------------------------------------

struct SynthArgs {
  std::string out = "data/synthetic";
  std::vector<std::string> domains;
  std::string size = "low";
  std::size_t sentences = 0, eval = 200, generic = 3000, per_domain = 500;
  double swap = -1;
  bool pool = true;
};

int run_synth(const Globals& g, const SynthArgs& a) {
  const auto names = a.domains.empty() ? harness::builtin_domains() : a.domains;
  const std::size_t n = a.sentences ? a.sentences : harness::size_for(a.size);
  for (const auto& name : names) {
    auto spec = harness::builtin_domain(name, n, g.seed);
    spec.eval_utterances = a.eval;
    if (a.swap >= 0) spec.corruption.swap_probability = a.swap;
    const auto d = harness::synthesize_domain(spec);
    harness::write_synthetic(a.out, d);
    std::printf("%s: %zu sentences, %zu n-best lists\n", name.c_str(), d.corpus.size(), d.nbest.size());
  }
  if (a.pool) {
    const auto pool = harness::pretraining_pool(g.seed, a.generic, a.per_domain);
    harness::write_lines(fs::path(a.out) / "pool.txt", pool);
    std::printf("pool: %zu sentences\n", pool.size());
  }
  return 0;
}

// ---- train-prompt / train-baseline ------------------------------------------------------------

struct TrainArgs {
  std::string checkpoint, corpus, domain, out, method = "prompt", init = "vocab", lr_grid;
  std::size_t k = 50, epochs = 10, batch_tokens = 256, patience = 3;
  double reduction = 16, split = 0.8;
};

template <typename T>
adapt::AdaptResult<T> train_from_args(const Globals& g, const TrainArgs& a, const lm::Checkpoint<T>& ck,
                                      adapt::MethodSpec spec) {
  const auto lines = harness::read_lines(a.corpus);
  const auto split = harness::split_corpus(lines, a.split, substream_seed(g.seed, "split/" + a.domain));
  adapt::AdaptJob job;
  job.domain = a.domain;
  job.spec = spec;
  job.hyper.epochs = a.epochs;
  job.hyper.batch_tokens = a.batch_tokens;
  job.hyper.patience = a.patience;
  job.hyper.seed = g.seed;
  job.lr_grid = parse_list(a.lr_grid);
  return adapt::train_baseline(ck.model, ck.vocab, split.train, encode_all(ck.vocab, split.train),
                               encode_all(ck.vocab, split.dev), job);
}

void print_history(const lm::TrainHistory& h, double lr) {
  for (std::size_t e = 0; e < h.dev_perplexity.size(); ++e) {
    std::printf("epoch %zu  dev perplexity %.4f\n", e, h.dev_perplexity[e]);
  }
  std::printf("selected lr %g, best epoch %zu, dev perplexity %.4f\n", lr, h.best_epoch, h.best_dev_perplexity);
}

int run_train_prompt(const Globals& g, const TrainArgs& a) {
  return num::dispatch(g.prec(), [&]<typename T>() {
    const auto ck = lm::load_checkpoint<T>(a.checkpoint);
    adapt::MethodSpec spec{adapt::Method::prompt, a.k, adapt::parse_prompt_init(a.init), a.reduction};
    const auto r = train_from_args<T>(g, a, ck, spec);
    const auto& prompt = std::get<adapt::DomainPrompt<T>>(r.artifact);
    adapt::save_prompt(a.out, prompt);
    print_history(r.history, r.selected_lr);
    std::printf("saved %s  (%zu trainable parameters)\n", a.out.c_str(), r.trainable);
    return 0;
  });
}

int run_train_baseline(const Globals& g, const TrainArgs& a) {
  return num::dispatch(g.prec(), [&]<typename T>() {
    const auto ck = lm::load_checkpoint<T>(a.checkpoint);
    adapt::MethodSpec spec{adapt::parse_method(a.method), a.k, adapt::parse_prompt_init(a.init), a.reduction};
    const auto r = train_from_args<T>(g, a, ck, spec);
    const fs::path out(a.out);
    const auto entry = adapt::save_artifact(out, out, a.domain, spec, r, ck.model, ck.vocab);
    adapt::Manifest manifest;
    const fs::path manifest_path = out / "manifest.json";
    if (fs::exists(manifest_path)) manifest = adapt::Manifest::load(manifest_path);
    manifest.base_fingerprint = ck.model.fingerprint();
    manifest.entries.push_back(entry);
    manifest.save(manifest_path);
    if (!r.history.dev_perplexity.empty()) print_history(r.history, r.selected_lr);
    std::printf("%s: %zu trainable parameters, artifact %s\n", spec.label().c_str(), r.trainable,
                entry.artifact.empty() ? "(none)" : entry.artifact.c_str());
    return 0;
  });
}

// ---- score / generate -------------------------------------------------------------------------

struct ScoreArgs {
  std::string checkpoint, text, input;
  ArtifactArgs artifact;
  bool per_token = false;
};

int run_score(const Globals& g, const ScoreArgs& a) {
  return num::dispatch(g.prec(), [&]<typename T>() {
    const auto ck = lm::load_checkpoint<T>(a.checkpoint);
    const auto artifact = a.artifact.load(ck.model);
    const auto scorer = rescore::make_scorer(ck.model, ck.vocab, artifact);
    std::vector<std::string> lines;
    if (!a.text.empty()) lines.push_back(a.text);
    if (!a.input.empty()) {
      auto more = harness::read_lines(a.input);
      lines.insert(lines.end(), more.begin(), more.end());
    }
    if (lines.empty()) throw std::invalid_argument("score: give --text or --input");
    std::printf("%s\tperplexity\ttext\n", a.per_token ? "logprob/token" : "logprob");
    double total = 0;
    std::size_t tokens = 0;
    for (const auto& line : lines) {
      const double lp = scorer(line);
      const std::size_t n = ck.vocab.encode(line).ids.size();
      total += lp;
      tokens += n;
      const double shown = a.per_token ? lp / double(n) : lp;
      std::printf("%.6f\t%.4f\t%s\n", shown, std::exp(-lp / double(n)), line.c_str());
    }
    if (lines.size() > 1) std::printf("corpus perplexity %.4f over %zu tokens\n", std::exp(-total / double(tokens)), tokens);
    return 0;
  });
}

struct GenerateArgs {
  std::string checkpoint, seed_text, mode = "greedy";
  ArtifactArgs artifact;
  std::size_t max_new = 20, top_k = 10;
  double temperature = 1.0;
};

int run_generate(const Globals& g, const GenerateArgs& a) {
  return num::dispatch(g.prec(), [&]<typename T>() {
    const auto ck = lm::load_checkpoint<T>(a.checkpoint);
    const auto artifact = a.artifact.load(ck.model);
    lm::GenerationOptions opts;
    opts.max_new = a.max_new;
    opts.mode = a.mode == "greedy" ? lm::DecodeMode::greedy : lm::DecodeMode::top_k;
    if (a.mode != "greedy" && a.mode != "top-k") throw std::invalid_argument("--mode must be greedy or top-k");
    opts.top_k = a.top_k;
    opts.temperature = a.temperature;
    opts.seed = g.seed;
    lm::Conditioning<T> cond;
    std::optional<lm::PrefixCache<T>> cache;
    std::optional<lm::Model<T>> tuned;
    if (const auto* p = std::get_if<adapt::DomainPrompt<T>>(&artifact)) {
      cache = lm::build_prefix_cache(ck.model, *p);
    } else if (const auto* f = std::get_if<adapt::FixedPrompt>(&artifact)) {
      cache = lm::build_prefix_cache(ck.model, adapt::embeddings_for(ck.model, ck.vocab, f->words));
    } else if (const auto* ad = std::get_if<lm::DomainAdapters<T>>(&artifact)) {
      cond.adapters = ad;
    } else if (const auto* params = std::get_if<lm::Parameters<T>>(&artifact)) {
      tuned.emplace(ck.model.config(), *params);
    }
    if (cache) cond.cache = &*cache;
    std::printf("%s\n", lm::generate(tuned ? *tuned : ck.model, ck.vocab, a.seed_text, opts, cond).c_str());
    return 0;
  });
}

// ---- rescore / eval ---------------------------------------------------------------------------

struct RescoreArgs {
  std::string checkpoint, nbest, out, weights = "1,1,1", name = "rescored", tune_nbest, weight_grid = "0,0.25,0.5,1,2,4";
  ArtifactArgs artifact;
  bool per_token = false, report = false;
  std::size_t threads = 1;
};

void write_selections(const fs::path& path, const std::string& name, const rescore::RescoreWeights& w,
                      const std::vector<rescore::Selection>& sel) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << json{{"system", name}, {"weights", {{"am", w.am}, {"flm", w.flm}, {"lm", w.lm}}}}.dump() << '\n';
  for (const auto& s : sel) {
    json j{{"utt_id", s.utt_id}, {"index", s.index}, {"text", s.text}};
    if (!s.error.empty()) j["error"] = s.error;
    out << j.dump() << '\n';
  }
}

rescore::SystemSelections read_selections(const std::string& spec) {
  // name=path or just path (the name then comes from the file header)
  std::string name, path = spec;
  if (const auto eq = spec.find('='); eq != std::string::npos) {
    name = spec.substr(0, eq);
    path = spec.substr(eq + 1);
  }
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open selections " + path);
  std::string line;
  std::getline(in, line);
  const auto header = json::parse(line);
  rescore::SystemSelections sys;
  sys.name = name.empty() ? header.value("system", path) : name;
  sys.trainable = header.value("trainable_params", std::size_t{0});
  if (header.contains("weights")) {
    const auto& w = header["weights"];
    sys.weights = {w.value("am", 1.0), w.value("flm", 1.0), w.value("lm", 1.0)};
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    sys.selections.push_back({j.at("utt_id"), j.at("index"), j.value("text", ""), j.value("error", "")});
  }
  return sys;
}

int run_rescore(const Globals& g, const RescoreArgs& a) {
  return num::dispatch(g.prec(), [&]<typename T>() {
    const auto ck = lm::load_checkpoint<T>(a.checkpoint);
    const auto artifact = a.artifact.load(ck.model);
    const auto mode = a.per_token ? rescore::LmScoreMode::per_token : rescore::LmScoreMode::sum;
    const auto scorer = rescore::make_scorer(ck.model, ck.vocab, artifact, {mode, true});
    const auto lists = rescore::load_nbest(a.nbest);
    auto weights = parse_weights(a.weights);
    if (!a.tune_nbest.empty()) {
      const auto dev = rescore::load_nbest(a.tune_nbest);
      const auto scores = rescore::score_nbest(dev, scorer, a.threads);
      weights = rescore::tune_weights(dev, scores, parse_list(a.weight_grid), weights);
      std::printf("tuned weights am=%g flm=%g lm=%g\n", weights.am, weights.flm, weights.lm);
    }
    const auto sel = rescore::rescore(lists, scorer, weights, a.threads);
    std::size_t failed = 0;
    for (const auto& s : sel) {
      if (!s.error.empty()) {
        ++failed;
        std::fprintf(stderr, "%s: scoring failed, kept the 1-best: %s\n", s.utt_id.c_str(), s.error.c_str());
      }
    }
    if (!a.out.empty()) write_selections(a.out, a.name, weights, sel);
    if (a.report) {
      const std::vector<rescore::SystemSelections> systems{{a.name, 0, weights, sel}};
      std::printf("%s", rescore::format_table(rescore::evaluate(lists, systems)).c_str());
    } else if (a.out.empty()) {
      for (const auto& s : sel) std::printf("%s\t%zu\t%s\n", s.utt_id.c_str(), s.index, s.text.c_str());
    }
    if (failed) std::fprintf(stderr, "%zu utterance(s) kept their 1-best after a scoring failure\n", failed);
    return 0;
  });
}

struct EvalArgs {
  std::string nbest, json_out;
  std::vector<std::string> systems;
};

int run_eval(const EvalArgs& a) {
  const auto lists = rescore::load_nbest(a.nbest);
  std::vector<rescore::SystemSelections> systems;
  for (const auto& s : a.systems) systems.push_back(read_selections(s));
  const auto report = rescore::evaluate(lists, systems);
  std::printf("%s", rescore::format_table(report).c_str());
  if (!a.json_out.empty()) std::ofstream(a.json_out) << rescore::to_json(report).dump(2) << '\n';
  return 0;
}

int run_experiment_cmd(const Globals& g, const std::string& config_path, bool seed_given, bool precision_given) {
  if (config_path.empty()) throw std::invalid_argument("experiment: pass --config <path>");
  auto config = harness::load_experiment_config(config_path);
  if (seed_given) config.seed = g.seed;
  if (precision_given) config.precision = g.prec();
  const auto result = harness::run_experiment(config);
  std::printf("%s", harness::format_experiment_table(result).c_str());
  std::printf("wrote %s\n", (config.output / "report.json").string().c_str());
  for (const auto& c : result.cells) {
    if (!c.ok()) return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain prompts for language-model rescoring"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  auto* seed_opt = app.add_option("--seed", g.seed, "root random seed");
  auto* prec_opt = app.add_option("--precision", g.precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
  app.add_option("--config", g.config, "model config (pretrain) or experiment config (experiment)");

  PretrainArgs pre;
  auto* pretrain = app.add_subcommand("pretrain", "train a backbone from scratch");
  pretrain->add_option("--corpus", pre.corpora, "text corpora, one sentence per line");
  pretrain->add_flag("--synthetic-pool", pre.synthetic_pool, "add the built-in generic+domain pool");
  pretrain->add_option("--generic", pre.generic, "generic sentences in the synthetic pool");
  pretrain->add_option("--per-domain", pre.per_domain, "sentences per domain in the synthetic pool");
  pretrain->add_option("--out", pre.out, "checkpoint directory")->required();
  pretrain->add_option("--epochs", pre.epochs);
  pretrain->add_option("--lr", pre.lr);
  pretrain->add_option("--batch-tokens", pre.batch_tokens);
  pretrain->add_flag("--no-position-shift", pre.no_position_shift,
                     "always start sentences at position 0");

  SynthArgs syn;
  auto* synth = app.add_subcommand("synth", "write the synthetic domain corpora and n-best files");
  synth->add_option("--out", syn.out);
  synth->add_option("--domains", syn.domains, "subset of airlines, fastfood, healthcare, insurance")->delimiter(',');
  synth->add_option("--size", syn.size, "low (1k) or large (50k)")->check(CLI::IsMember({"low", "large"}));
  synth->add_option("--sentences", syn.sentences, "overrides --size");
  synth->add_option("--eval", syn.eval, "n-best lists per domain");
  synth->add_option("--swap", syn.swap, "per-word swap probability");
  synth->add_option("--generic", syn.generic);
  synth->add_option("--per-domain", syn.per_domain);
  synth->add_flag("!--no-pool", syn.pool, "skip pool.txt");

  TrainArgs tp;
  auto* train_prompt = app.add_subcommand("train-prompt", "learn a domain prompt against a frozen backbone");
  TrainArgs tb;
  auto* train_baseline = app.add_subcommand("train-baseline", "train one of the comparison methods");
  for (auto [cmd, t] : {std::pair{train_prompt, &tp}, std::pair{train_baseline, &tb}}) {
    cmd->add_option("--checkpoint", t->checkpoint)->required();
    cmd->add_option("--corpus", t->corpus, "domain text, split 80:20 into train and dev")->required();
    cmd->add_option("--domain", t->domain)->required();
    cmd->add_option("--out", t->out)->required();
    cmd->add_option("--k", t->k, "prompt length");
    cmd->add_option("--init", t->init, "vocab or random")->check(CLI::IsMember({"vocab", "random"}));
    cmd->add_option("--lr-grid", t->lr_grid, "comma-separated learning rates");
    cmd->add_option("--epochs", t->epochs);
    cmd->add_option("--batch-tokens", t->batch_tokens);
    cmd->add_option("--patience", t->patience);
    cmd->add_option("--split", t->split, "train share of the corpus");
  }
  train_baseline->add_option("--method", tb.method,
                             "none, prompt, domain-embedding, fixed-prompt, embedding, adapter, full");
  train_baseline->add_option("--reduction", tb.reduction, "adapter reduction factor");

  ScoreArgs sc;
  auto* score = app.add_subcommand("score", "log-probability and perplexity of sentences");
  score->add_option("--checkpoint", sc.checkpoint)->required();
  score->add_option("--text", sc.text);
  score->add_option("--input", sc.input, "file with one sentence per line");
  score->add_flag("--per-token", sc.per_token);
  sc.artifact.add(score);

  GenerateArgs ge;
  auto* generate = app.add_subcommand("generate", "continue a seed text");
  generate->add_option("--checkpoint", ge.checkpoint)->required();
  generate->add_option("--seed-text", ge.seed_text)->required();
  generate->add_option("--max-new", ge.max_new);
  generate->add_option("--mode", ge.mode, "greedy or top-k");
  generate->add_option("--top-k", ge.top_k);
  generate->add_option("--temperature", ge.temperature);
  ge.artifact.add(generate);

  RescoreArgs rs;
  auto* rescore_cmd = app.add_subcommand("rescore", "pick hypotheses from n-best lists");
  rescore_cmd->add_option("--checkpoint", rs.checkpoint)->required();
  rescore_cmd->add_option("--nbest", rs.nbest)->required();
  rescore_cmd->add_option("--out", rs.out, "selections file (JSON lines)");
  rescore_cmd->add_option("--name", rs.name, "system name stored in the selections file");
  rescore_cmd->add_option("--weights", rs.weights, "am,flm,lm");
  rescore_cmd->add_option("--tune-nbest", rs.tune_nbest, "dev n-best file for a weight grid search");
  rescore_cmd->add_option("--weight-grid", rs.weight_grid);
  rescore_cmd->add_option("--threads", rs.threads);
  rescore_cmd->add_flag("--per-token", rs.per_token, "length-normalize the LM score");
  rescore_cmd->add_flag("--report", rs.report, "print WER against the references");
  rs.artifact.add(rescore_cmd);

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "WER, WERR and oracle WER of saved selections");
  eval->add_option("--nbest", ev.nbest)->required();
  eval->add_option("--system", ev.systems, "name=selections.jsonl (repeatable)");
  eval->add_option("--json", ev.json_out);

  auto* experiment = app.add_subcommand("experiment", "run a domain × method grid from --config");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*pretrain) return run_pretrain(g, pre);
    if (*synth) return run_synth(g, syn);
    if (*train_prompt) return run_train_prompt(g, tp);
    if (*train_baseline) return run_train_baseline(g, tb);
    if (*score) return run_score(g, sc);
    if (*generate) return run_generate(g, ge);
    if (*rescore_cmd) return run_rescore(g, rs);
    if (*eval) return run_eval(ev);
    if (*experiment) return run_experiment_cmd(g, g.config, seed_opt->count() > 0, prec_opt->count() > 0);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
