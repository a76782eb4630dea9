#include <doctest.h>

#include <atomic>
#include <functional>
#include <random>
#include <sstream>

#include "dprompt/adaptation/prompt.hpp"
#include "dprompt/rescoring/evaluate.hpp"
#include "dprompt/rescoring/nbest.hpp"
#include "dprompt/rescoring/rescore.hpp"
#include "dprompt/rescoring/scorer.hpp"
#include "dprompt/rescoring/wer.hpp"
#include "dprompt/util/errors.hpp"
#include "helpers.hpp"
#include "toy_domain.hpp"

using namespace dprompt;
using rescore::Hypothesis;
using rescore::NBestList;
using rescore::RescoreWeights;

namespace {

NBestList make_list(std::string id, std::optional<std::string> ref, std::vector<Hypothesis> hyps) {
  return NBestList{std::move(id), std::move(ref), std::move(hyps)};
}

std::vector<NBestList> parse(const std::string& text) {
  std::istringstream in(text);
  return rescore::parse_nbest(in);
}

// Plain recursion over the three edit operations; exponential, fine for short inputs.
std::size_t naive_distance(const std::vector<std::string>& a, std::size_t i, const std::vector<std::string>& b,
                           std::size_t j) {
  if (i == a.size()) return b.size() - j;
  if (j == b.size()) return a.size() - i;
  const std::size_t sub = naive_distance(a, i + 1, b, j + 1) + (a[i] == b[j] ? 0 : 1);
  const std::size_t del = naive_distance(a, i + 1, b, j) + 1;
  const std::size_t ins = naive_distance(a, i, b, j + 1) + 1;
  return std::min({sub, del, ins});
}

rescore::Scorer table_scorer(std::map<std::string, double> table) {
  return [table = std::move(table)](const std::string& text) { return table.at(text); };
}

}  // namespace

TEST_CASE("n-best parsing") {
  const auto lists = parse(
      R"({"utt_id": "u1", "ref": "book a flight", "hyps": [{"text": "book a flight", "am_score": -1.5, "flm_score": -2}, {"text": "book a fight", "am_score": -1.7, "flm_score": -2.5}]})"
      "\n\n"
      R"({"utt_id": "u2", "hyps": [{"text": "hi", "am_score": 0, "flm_score": -1}]})"
      "\n");
  REQUIRE(lists.size() == 2);
  CHECK(lists[0].utt_id == "u1");
  CHECK(lists[0].ref == "book a flight");
  REQUIRE(lists[0].hyps.size() == 2);
  CHECK(lists[0].hyps[1].text == "book a fight");
  CHECK(lists[0].hyps[1].am_score == -1.7);
  CHECK_FALSE(lists[1].ref.has_value());

  std::string ten = R"({"utt_id": "u", "hyps": [)";
  for (int i = 0; i < 10; ++i) ten += std::string(i ? "," : "") + R"({"text": "w)" + std::to_string(i) + R"(", "am_score": -1, "flm_score": -1})";
  ten += "]}";
  CHECK(parse(ten)[0].hyps.size() == 10);

  std::ostringstream out;
  rescore::write_nbest(out, lists);
  const auto again = parse(out.str());
  REQUIRE(again.size() == 2);
  CHECK(again[0].hyps[1].flm_score == -2.5);
  CHECK(again[0].ref == lists[0].ref);
}

TEST_CASE("n-best errors name the line and the field") {
  const std::string good = R"({"utt_id": "u1", "hyps": [{"text": "a", "am_score": -1, "flm_score": -1}]})";
  auto error_of = [](const std::string& text) {
    try {
      parse(text);
    } catch (const rescore::NBestFormatError& e) {
      return std::make_pair(e.line(), std::string(e.what()));
    }
    return std::make_pair(std::size_t{0}, std::string());
  };
  auto [line, what] = error_of(good + "\n" + R"({"utt_id": "u2", "hyps": [{"text": "a", "flm_score": -1}]})");
  CHECK(line == 2);
  CHECK(what.find("am_score") != std::string::npos);
  CHECK(what.find("line 2") != std::string::npos);

  std::tie(line, what) = error_of(good + "\n\n{not json");
  CHECK(line == 3);
  std::tie(line, what) = error_of(R"({"utt_id": "u", "hyps": []})");
  CHECK(line == 1);
  CHECK(what.find("hyp") != std::string::npos);
  std::tie(line, what) = error_of(R"({"utt_id": "u", "hyps": [{"text": "a", "am_score": "x", "flm_score": -1}]})");
  CHECK(line == 1);
  std::tie(line, what) = error_of(R"({"hyps": [{"text": "a", "am_score": 1, "flm_score": -1}]})");
  CHECK(what.find("utt_id") != std::string::npos);
  CHECK_THROWS(rescore::load_nbest("/nonexistent/file.jsonl"));
}

TEST_CASE("WER examples") {
  CHECK(rescore::wer("hello world", "hello world") == 0.0);
  CHECK(rescore::wer("a b c", "a x c") == doctest::Approx(1.0 / 3));
  CHECK(rescore::wer("a b", "a x y") == 1.0);
  CHECK(rescore::wer("Hello World", "hello world") == 0.0);
  CHECK(rescore::wer("a b c", "") == 1.0);
  CHECK_THROWS_AS(rescore::wer("", "a"), std::invalid_argument);
  CHECK_THROWS_AS(rescore::wer("   ", "a"), std::invalid_argument);
  rescore::WerCounts total;
  total += rescore::wer_counts("a b", "a");
  total += rescore::wer_counts("c d e", "c d e");
  CHECK(total.edits == 1);
  CHECK(total.ref_words == 5);
  CHECK(total.rate() == doctest::Approx(0.2));
}

TEST_CASE("edit distance agrees with exhaustive recursion and is symmetric") {
  std::mt19937_64 rng(17);
  const std::vector<std::string> alphabet{"a", "b", "c"};
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> a(rng() % 6), b(rng() % 6);
    for (auto& w : a) w = alphabet[rng() % 3];
    for (auto& w : b) w = alphabet[rng() % 3];
    const auto d = rescore::edit_distance(a, b);
    CHECK(d == naive_distance(a, 0, b, 0));
    CHECK(d == rescore::edit_distance(b, a));
    if (!a.empty() && !b.empty()) {
      std::string sa, sb;
      for (auto& w : a) sa += w + " ";
      for (auto& w : b) sb += w + " ";
      CHECK(rescore::wer(sa, sb) * double(a.size()) == doctest::Approx(rescore::wer(sb, sa) * double(b.size())));
    }
  }
}

TEST_CASE("interpolation") {
  const Hypothesis h{"x", -2, -3};
  CHECK(rescore::interpolated_score(h, -4, {1, 1, 1}) == -9);
  CHECK(rescore::interpolated_score(h, -4, {0.5, 0, 2}) == -9);
  CHECK_THROWS_AS((RescoreWeights{0, 0, 0}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((RescoreWeights{-1, 1, 1}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((RescoreWeights{1, std::nan(""), 1}.validate()), std::invalid_argument);
  CHECK_NOTHROW((RescoreWeights{0, 0, 1}.validate()));
}

TEST_CASE("selection follows the chosen score and breaks ties toward the first pass") {
  // am descending, lm ascending
  const auto list = make_list("u", "c", {{"a", -1, -5}, {"b", -2, -1}, {"c", -3, -3}});
  const auto scorer = table_scorer({{"a", -9}, {"b", -4}, {"c", -1}});
  const std::vector<NBestList> lists{list};
  CHECK(rescore::rescore(lists, scorer, {1, 0, 0})[0].index == 0);
  CHECK(rescore::rescore(lists, scorer, {0, 0, 1})[0].index == 2);
  CHECK(rescore::rescore(lists, scorer, {0, 1, 0})[0].index == 1);

  const std::vector<NBestList> same{make_list("u", "a", {{"a", -1, -1}, {"a", -1, -1}, {"a", -1, -1}})};
  CHECK(rescore::rescore(same, table_scorer({{"a", -2}}), {1, 1, 1})[0].index == 0);
}

TEST_CASE("scaling every weight by a positive constant keeps the argmax") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 3);
  std::vector<NBestList> lists;
  std::map<std::string, double> table;
  for (int u = 0; u < 50; ++u) {
    std::vector<Hypothesis> hyps;
    for (int i = 0; i < 10; ++i) {
      const std::string text = "u" + std::to_string(u) + "h" + std::to_string(i);
      hyps.push_back({text, n(rng), n(rng)});
      table[text] = n(rng);
    }
    lists.push_back(make_list("u" + std::to_string(u), std::nullopt, hyps));
  }
  const auto scorer = table_scorer(table);
  for (const RescoreWeights w : {RescoreWeights{1, 1, 1}, RescoreWeights{0.3, 2, 0.7}, RescoreWeights{1, 0, 0}}) {
    const auto base = rescore::rescore(lists, scorer, w);
    for (double c : {0.5, 2.0, 8.0}) {
      const auto scaled = rescore::rescore(lists, scorer, {c * w.am, c * w.flm, c * w.lm});
      for (std::size_t u = 0; u < lists.size(); ++u) CHECK(scaled[u].index == base[u].index);
    }
  }
}

TEST_CASE("hypothesis 2 wins exactly when the LM weight is positive") {
  // Equal first-pass totals; the second-pass scorer prefers hypothesis 2 (−0.1 vs −1).
  const std::vector<NBestList> lists{make_list("u", "b", {{"a", -1, -2}, {"b", -2, -1}})};
  const auto scorer = table_scorer({{"a", -1}, {"b", -0.1}});
  CHECK(rescore::rescore(lists, scorer, {1, 1, 0})[0].index == 0);
  for (double lm : {1e-6, 0.1, 1.0, 10.0}) CHECK(rescore::rescore(lists, scorer, {1, 1, lm})[0].index == 1);
}

TEST_CASE("a failing scorer costs only its own utterance") {
  const std::vector<NBestList> lists{make_list("ok1", "b", {{"a", -1, -1}, {"b", -1, -1}}),
                                     make_list("bad", "y", {{"x", -1, -1}, {"y", -1, -1}}),
                                     make_list("nan", "q", {{"p", -1, -1}, {"q", -1, -1}}),
                                     make_list("ok2", "d", {{"c", -1, -1}, {"d", -1, -1}})};
  const rescore::Scorer scorer = [](const std::string& t) -> double {
    if (t == "y") throw std::runtime_error("boom");
    if (t == "q") return std::nan("");
    return t == "b" || t == "d" ? -1.0 : -5.0;
  };
  for (std::size_t threads : {1, 3}) {
    const auto sel = rescore::rescore(lists, scorer, {1, 1, 1}, threads);
    CHECK(sel[0].index == 1);
    CHECK(sel[1].index == 0);
    CHECK(sel[1].error.find("boom") != std::string::npos);
    CHECK(sel[2].index == 0);
    CHECK_FALSE(sel[2].error.empty());
    CHECK(sel[3].index == 1);
    CHECK(sel[3].error.empty());
  }
}

TEST_CASE("evaluate: formula, baseline identity, oracle, missing reference") {
  CHECK(rescore::werr(20, 18) == doctest::Approx(10.0));
  CHECK(rescore::werr(0, 0) == 0.0);

  const std::vector<NBestList> lists{
      make_list("u1", "a b c d e", {{"a b x d e", -1, -1}, {"a b c d e", -2, -2}, {"x x x x x", -3, -3}}),
      make_list("u2", "f g h i j", {{"f g h i j", -1, -1}, {"f g h i x", -2, -2}})};
  const auto scorer = table_scorer({{"a b x d e", -5}, {"a b c d e", -1}, {"x x x x x", -9}, {"f g h i j", -1}, {"f g h i x", -2}});
  const std::vector<rescore::SystemSpec> systems{{"first-pass", 0, table_scorer({{"a b x d e", 0}, {"a b c d e", 0}, {"x x x x x", 0}, {"f g h i j", 0}, {"f g h i x", 0}}), {1, 1, 0}},
                                                 {"lm", 7, scorer, {1, 1, 1}}};
  const auto report = rescore::evaluate(lists, systems);
  CHECK(report.baseline_wer == doctest::Approx(0.1));
  CHECK(report.oracle_wer == 0.0);
  CHECK(report.oracle_selected == std::vector<std::size_t>{1, 0});
  CHECK(report.system("first-pass").werr == 0.0);
  CHECK(report.system("lm").wer == 0.0);
  CHECK(report.system("lm").werr == doctest::Approx(100.0));
  CHECK(report.system("lm").trainable == 7);
  CHECK(rescore::check_consistency(report, lists).empty());
  const auto table = rescore::format_table(report);
  CHECK(table.find("oracle") != std::string::npos);
  CHECK(table.find("lm") != std::string::npos);
  CHECK(rescore::to_json(report)["systems"].size() == 2);

  auto missing = lists;
  missing[1].ref.reset();
  CHECK_THROWS_AS(rescore::evaluate(missing, systems), std::invalid_argument);
}

TEST_CASE("oracle dominates every system and worst-case selection bounds them") {
  std::mt19937_64 rng(9);
  const std::vector<std::string> words{"a", "b", "c", "d"};
  auto sentence = [&](std::size_t n) {
    std::string s;
    for (std::size_t i = 0; i < n; ++i) s += (i ? " " : "") + words[rng() % words.size()];
    return s;
  };
  std::vector<NBestList> lists;
  for (int u = 0; u < 40; ++u) {
    std::vector<Hypothesis> hyps;
    for (int i = 0; i < 6; ++i) hyps.push_back({sentence(1 + rng() % 5), -double(rng() % 7), -double(rng() % 7)});
    lists.push_back(make_list("u" + std::to_string(u), sentence(1 + rng() % 5), hyps));
  }
  std::size_t worst_edits = 0, ref_words = 0;
  for (const auto& l : lists) {
    std::size_t worst = 0;
    for (const auto& h : l.hyps) worst = std::max(worst, rescore::wer_counts(*l.ref, h.text).edits);
    worst_edits += worst;
    ref_words += rescore::wer_counts(*l.ref, "").ref_words;
  }
  std::vector<rescore::SystemSpec> systems;
  for (int s = 0; s < 8; ++s) {
    systems.push_back({"s" + std::to_string(s), 0, [s](const std::string& t) { return -double((std::hash<std::string>{}(t) + std::size_t(s)) % 11); },
                       {double(s % 3), 1, double(s)}});
  }
  const auto report = rescore::evaluate(lists, systems);
  for (const auto& sys : report.systems) {
    CHECK(report.oracle_wer <= sys.wer);
    CHECK(sys.wer <= double(worst_edits) / double(ref_words));
  }
  CHECK(report.oracle_wer <= report.baseline_wer);
}

TEST_CASE("threaded scoring gives the same selections in the same order") {
  std::vector<NBestList> lists;
  std::map<std::string, double> table;
  std::mt19937_64 rng(3);
  for (int u = 0; u < 37; ++u) {
    std::vector<Hypothesis> hyps;
    for (int i = 0; i < 5; ++i) {
      const auto t = std::to_string(u) + "-" + std::to_string(i);
      hyps.push_back({t, -double(rng() % 5), -double(rng() % 5)});
      table[t] = -double(rng() % 9);
    }
    lists.push_back(make_list("u" + std::to_string(u), std::nullopt, hyps));
  }
  const auto scorer = table_scorer(table);
  const auto one = rescore::rescore(lists, scorer, {1, 1, 1}, 1);
  for (std::size_t threads : {2, 4, 64}) {
    const auto many = rescore::rescore(lists, scorer, {1, 1, 1}, threads);
    REQUIRE(many.size() == one.size());
    for (std::size_t u = 0; u < one.size(); ++u) {
      CHECK(many[u].utt_id == one[u].utt_id);
      CHECK(many[u].index == one[u].index);
    }
  }
}

TEST_CASE("weight tuning finds the LM weight that fixes the dev set") {
  // First pass prefers the wrong hypothesis by 1; the LM prefers the right one by 2.
  std::vector<NBestList> dev;
  std::map<std::string, double> table;
  for (int u = 0; u < 5; ++u) {
    const auto right = "right" + std::to_string(u), wrong = "wrong" + std::to_string(u);
    dev.push_back(make_list("u" + std::to_string(u), right, {{wrong, -1, -1}, {right, -1.5, -1.5}}));
    table[right] = -1;
    table[wrong] = -3;
  }
  const auto scores = rescore::score_nbest(dev, table_scorer(table));
  const std::vector<double> grid{0, 0.25, 1, 4};
  const auto tuned = rescore::tune_weights(dev, scores, grid, {1, 1, 0});
  CHECK(tuned.lm > 0.5);
  const auto sel = rescore::selections(dev, scores, tuned);
  for (const auto& s : sel) CHECK(s.index == 1);
  // Already perfect: nothing moves.
  CHECK(rescore::tune_weights(dev, scores, grid, {1, 1, 1}) == RescoreWeights{1, 1, 1});
}

TEST_CASE("model scorer: cached and uncached prompts select the same hypotheses") {
  const auto w = testing::make_toy_world(2);
  const auto train = testing::encode_all(w.vocab, w.flights_train);
  adapt::PromptJob job;
  job.k = 3;
  job.hyper.epochs = 2;
  job.lr_grid = {1e-1};
  const auto prompt = adapt::train_prompt(w.model, w.vocab, w.flights_train, train, {}, job).prompt;

  std::vector<NBestList> lists;
  for (std::size_t u = 0; u < 10; ++u) {
    const auto& ref = w.flights_dev[u];
    lists.push_back(make_list("u" + std::to_string(u), ref,
                              {{w.food_train[u], -1, -1}, {ref, -1, -1}, {ref + " burger", -1, -1}, {"zzz unknown", -1, -1}}));
  }
  adapt::Artifact<double> artifact = prompt;
  rescore::ScorerOptions cached, uncached;
  uncached.use_cache = false;
  const auto a = rescore::make_scorer(w.model, w.vocab, artifact, cached);
  const auto b = rescore::make_scorer(w.model, w.vocab, artifact, uncached);
  for (const auto& l : lists) {
    for (const auto& h : l.hyps) CHECK(testing::rel_diff(a(h.text), b(h.text)) <= 1e-6);
  }
  const auto sa = rescore::rescore(lists, a, {1, 1, 1});
  const auto sb = rescore::rescore(lists, b, {1, 1, 1});
  for (std::size_t u = 0; u < lists.size(); ++u) CHECK(sa[u].index == sb[u].index);

  rescore::ScorerOptions per_token;
  per_token.mode = rescore::LmScoreMode::per_token;
  const auto c = rescore::make_scorer(w.model, w.vocab, artifact, per_token);
  CHECK(c("book a flight") == doctest::Approx(a("book a flight") / 3));

  auto stale = prompt;
  stale.base_fingerprint = "deadbeef";
  CHECK_THROWS_AS(rescore::make_scorer(w.model, w.vocab, adapt::Artifact<double>{stale}), FingerprintMismatch);
}
