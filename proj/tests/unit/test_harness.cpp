#include <doctest.h>

#include <fstream>
#include <iterator>
#include <set>

#include "dprompt/harness/backbone.hpp"
#include "dprompt/harness/corpus.hpp"
#include "dprompt/harness/experiment.hpp"
#include "dprompt/harness/synthetic.hpp"
#include "dprompt/model/checkpoint.hpp"
#include "dprompt/rescoring/nbest.hpp"
#include "dprompt/rescoring/wer.hpp"
#include "helpers.hpp"

using namespace dprompt;
namespace fs = std::filesystem;

namespace {

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> numbered(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("line " + std::to_string(i));
  return out;
}

// Two small synthetic domains plus a quickly pretrained checkpoint, written once per process.
struct SmallWorld {
  fs::path root;
  harness::ExperimentConfig config;
};

const SmallWorld& small_world() {
  static const SmallWorld w = [] {
    SmallWorld s;
    s.root = testing::temp_dir("harness-world");
    std::vector<std::string> pool;
    for (const std::string name : {"airlines", "fastfood"}) {
      auto spec = harness::builtin_domain(name, 60, 4);
      spec.eval_utterances = 12;
      spec.corruption.nbest = 4;
      const auto d = harness::synthesize_domain(spec);
      harness::write_synthetic(s.root, d);
      pool.insert(pool.end(), d.corpus.begin(), d.corpus.end());
      s.config.domains.push_back({name, s.root / (name + ".txt"), s.root / (name + ".nbest.jsonl"), std::nullopt});
    }
    auto mc = testing::tiny_config(1, 16, 2000);
    mc.max_positions = 32;
    lm::TrainHyper h;
    h.epochs = 1;
    h.lr = 1e-2;
    const auto bb = harness::pretrain_backbone<float>(pool, mc, h);
    lm::save_checkpoint(s.root / "ck", bb.checkpoint.model, bb.checkpoint.vocab);
    s.config.checkpoint = s.root / "ck";
    s.config.hyper.epochs = 1;
    s.config.hyper.batch_tokens = 64;
    s.config.seed = 11;
    return s;
  }();
  return w;
}

harness::MethodConfig method(adapt::Method m, std::size_t k = 2, std::vector<double> grid = {}) {
  harness::MethodConfig mc;
  mc.spec.method = m;
  mc.spec.k = k;
  mc.spec.reduction = 8;
  mc.lr_grid = std::move(grid);
  return mc;
}

}  // namespace

TEST_CASE("split_corpus") {
  const auto lines = numbered(10);
  const auto s = harness::split_corpus(lines, 0.8, 3);
  CHECK(s.train.size() == 8);
  CHECK(s.dev.size() == 2);
  const auto again = harness::split_corpus(lines, 0.8, 3);
  CHECK(again.train == s.train);
  CHECK(again.dev == s.dev);
  CHECK(harness::split_corpus(lines, 0.8, 4).train != s.train);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto corpus = numbered(5 + seed * 7);
    const auto sp = harness::split_corpus(corpus, 0.8, seed);
    std::set<std::string> train(sp.train.begin(), sp.train.end()), all(sp.train.begin(), sp.train.end());
    for (const auto& d : sp.dev) {
      CHECK(train.count(d) == 0);
      all.insert(d);
    }
    CHECK(all == std::set<std::string>(corpus.begin(), corpus.end()));
    CHECK(sp.train.size() + sp.dev.size() == corpus.size());
  }
  const auto two = harness::split_corpus(numbered(2), 0.99, 0);
  CHECK(two.train.size() == 1);
  CHECK(two.dev.size() == 1);
  CHECK_THROWS_AS(harness::split_corpus(numbered(1), 0.8, 0), std::invalid_argument);
  CHECK_THROWS_AS(harness::split_corpus(lines, 1.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(harness::split_corpus(lines, 0.0, 0), std::invalid_argument);
}

TEST_CASE("corpus files skip blank lines and carriage returns") {
  const auto dir = testing::temp_dir("corpus");
  std::ofstream(dir / "c.txt", std::ios::binary) << "one two\r\n\n  \nthree\n";
  CHECK(harness::read_lines(dir / "c.txt") == std::vector<std::string>{"one two", "three"});
  harness::write_lines(dir / "out.txt", numbered(3));
  CHECK(harness::read_lines(dir / "out.txt") == numbered(3));
  CHECK_THROWS(harness::read_lines(dir / "missing.txt"));
}

TEST_CASE("synthetic domain: no swaps means every hypothesis is the reference") {
  auto spec = harness::builtin_domain("airlines", 50, 1);
  spec.eval_utterances = 30;
  spec.corruption.swap_probability = 0;
  spec.corruption.truth_missing_rate = 0;
  const auto d = harness::synthesize_domain(spec);
  CHECK(d.corpus.size() == 50);
  REQUIRE(d.nbest.size() == 30);
  rescore::WerCounts oracle;
  for (const auto& l : d.nbest) {
    std::size_t best = SIZE_MAX;
    for (const auto& h : l.hyps) {
      CHECK(h.text == *l.ref);
      best = std::min(best, rescore::wer_counts(*l.ref, h.text).edits);
    }
    oracle.edits += best;
  }
  CHECK(oracle.edits == 0);
}

TEST_CASE("synthetic domain: reference present in at least 90% of lists and not always first") {
  for (const auto& name : harness::builtin_domains()) {
    const auto d = harness::synthesize_domain(harness::builtin_domain(name, 100, 2));
    std::size_t present = 0, first = 0;
    for (const auto& l : d.nbest) {
      CHECK(l.hyps.size() == 10);
      std::set<std::string> texts;
      for (const auto& h : l.hyps) {
        texts.insert(h.text);
        CHECK(std::isfinite(h.am_score));
        CHECK(std::isfinite(h.flm_score));
      }
      if (texts.count(*l.ref)) ++present;
      if (l.hyps[0].text == *l.ref) ++first;
    }
    CHECK(double(present) >= 0.9 * double(d.nbest.size()));
    CHECK(first < present);
    CHECK(first > 0);
  }
}

TEST_CASE("synthetic output is byte-identical per seed and round-trips through the n-best reader") {
  const auto a = testing::temp_dir("synth-a"), b = testing::temp_dir("synth-b");
  auto spec = harness::builtin_domain("fastfood", 80, 9);
  spec.eval_utterances = 25;
  harness::write_synthetic(a, harness::synthesize_domain(spec));
  harness::write_synthetic(b, harness::synthesize_domain(spec));
  CHECK(read_bytes(a / "fastfood.txt") == read_bytes(b / "fastfood.txt"));
  CHECK(read_bytes(a / "fastfood.nbest.jsonl") == read_bytes(b / "fastfood.nbest.jsonl"));

  const auto lists = rescore::load_nbest(a / "fastfood.nbest.jsonl");
  const auto d = harness::synthesize_domain(spec);
  REQUIRE(lists.size() == d.nbest.size());
  for (std::size_t i = 0; i < lists.size(); ++i) {
    CHECK(lists[i].utt_id == d.nbest[i].utt_id);
    CHECK(lists[i].ref == d.nbest[i].ref);
    REQUIRE(lists[i].hyps.size() == d.nbest[i].hyps.size());
    for (std::size_t h = 0; h < lists[i].hyps.size(); ++h) {
      CHECK(lists[i].hyps[h].text == d.nbest[i].hyps[h].text);
      CHECK(lists[i].hyps[h].am_score == d.nbest[i].hyps[h].am_score);
    }
  }
  spec.seed = 10;
  CHECK(harness::synthesize_domain(spec).corpus != d.corpus);
}

TEST_CASE("degenerate synthetic specs are rejected") {
  auto spec = harness::builtin_domain("airlines");
  auto bad = spec;
  bad.templates.clear();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = spec;
  bad.slots.clear();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = spec;
  bad.slots.begin()->second.clear();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = spec;
  bad.templates.push_back("i want {nonexistent}");
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = spec;
  bad.corruption.swap_probability = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_THROWS_AS(harness::synthesize_domain(bad), std::invalid_argument);
  CHECK_THROWS(harness::builtin_domain("banking"));
  CHECK(harness::size_for("low") == 1000);
  CHECK(harness::size_for("large") == 50000);
}

TEST_CASE("pretraining pool is deterministic and mixes all domains") {
  const auto a = harness::pretraining_pool(1, 50, 10);
  CHECK(a.size() == 90);
  CHECK(a == harness::pretraining_pool(1, 50, 10));
  CHECK(a != harness::pretraining_pool(2, 50, 10));
}

TEST_CASE("experiment config JSON round trip and validation") {
  const auto& w = small_world();
  auto config = w.config;
  config.methods = {method(adapt::Method::none), method(adapt::Method::prompt, 5, {0.1})};
  config.weights = {1, 0.5, 2};
  const auto j = harness::to_json(config);
  const auto back = harness::experiment_config_from_json(j);
  CHECK(back.checkpoint == config.checkpoint);
  CHECK(back.domains.size() == 2);
  CHECK(back.methods.size() == 2);
  CHECK(back.methods[1].spec.k == 5);
  CHECK(back.methods[1].lr_grid == std::vector<double>{0.1});
  CHECK(back.weights == config.weights);
  CHECK(back.seed == config.seed);

  auto bad = config;
  bad.split_ratio = 1.2;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = config;
  bad.methods.clear();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = config;
  bad.domains[0].corpus = w.root / "nope.txt";
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("experiment with only the unadapted backbone") {
  const auto& w = small_world();
  auto config = w.config;
  config.methods = {method(adapt::Method::none)};
  config.output = testing::temp_dir("exp-none");
  const auto r = harness::run_experiment(config);
  for (const auto& d : {"airlines", "fastfood"}) {
    const auto& report = r.reports.at(d);
    const auto& sys = report.system("no-adaptation");
    CHECK(sys.werr == doctest::Approx(rescore::werr(report.baseline_wer, sys.wer)));
    CHECK(report.oracle_wer <= sys.wer);
    CHECK(r.cell(d, "no-adaptation").ok());
    CHECK(r.cell(d, "no-adaptation").dev_perplexity > 1);
    const auto lists = rescore::load_nbest(w.root / (std::string(d) + ".nbest.jsonl"));
    CHECK(rescore::check_consistency(report, lists).empty());
  }
  CHECK(fs::exists(config.output / "report.json"));
  CHECK(fs::exists(config.output / "report.txt"));
  CHECK(harness::format_experiment_table(r).find("no-adaptation") != std::string::npos);
}

TEST_CASE("experiment reruns are identical and the manifest verifies") {
  const auto& w = small_world();
  auto config = w.config;
  config.methods = {method(adapt::Method::none), method(adapt::Method::prompt, 2, {0.1}),
                    method(adapt::Method::fixed_prompt, 3), method(adapt::Method::adapter, 0, {1e-3})};
  const auto out_a = testing::temp_dir("exp-a");
  config.output = out_a;
  const auto a = harness::run_experiment(config);
  config.output = testing::temp_dir("exp-b");
  const auto b = harness::run_experiment(config);
  CHECK(read_bytes(out_a / "report.json") == read_bytes(config.output / "report.json"));
  CHECK(read_bytes(out_a / "manifest.json") == read_bytes(config.output / "manifest.json"));
  CHECK(harness::to_json(a).dump() == harness::to_json(b).dump());
  for (const auto& c : a.cells) {
    INFO(c.domain << " " << c.method << " " << c.failed_stage << " " << c.error);
    CHECK(c.ok());
  }
  CHECK(adapt::verify_manifest(config.output / "manifest.json").empty());
  CHECK(a.manifest.entries.size() == 8);
  CHECK(a.cell("airlines", "domain-prompt (k=2, vocab init)").trainable == 32);
}

TEST_CASE("a failing stage is reported by name and other domains still finish") {
  const auto& w = small_world();
  auto config = w.config;
  std::ofstream(w.root / "broken.nbest.jsonl") << "{\"utt_id\": \"x\", \"hyps\": []}\n";
  config.domains[1].nbest = w.root / "broken.nbest.jsonl";
  config.methods = {method(adapt::Method::none)};
  config.output = testing::temp_dir("exp-fail");
  const auto r = harness::run_experiment(config);
  CHECK(r.cell("airlines", "no-adaptation").ok());
  const auto& bad = r.cell("fastfood", "no-adaptation");
  CHECK(bad.failed_stage == "load-nbest");
  CHECK(bad.error.find("line 1") != std::string::npos);
  CHECK(r.reports.count("airlines") == 1);
  CHECK(fs::exists(config.output / "report.json"));
}

TEST_CASE("slugs are filesystem-safe") {
  CHECK(harness::slug("domain-prompt (k=50, vocab init)") == "domain-prompt-k-50-vocab-init");
  CHECK(harness::slug("Adapter (c=0.5)") == "adapter-c-0p5");
}
