#include "dprompt/rescoring/evaluate.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace dprompt::rescore {

double werr(double baseline_wer, double system_wer) {
  if (baseline_wer == 0) return 0;
  return 100.0 * (baseline_wer - system_wer) / baseline_wer;
}

const SystemResult& EvalReport::system(const std::string& name) const {
  for (const auto& s : systems) {
    if (s.name == name) return s;
  }
  throw std::out_of_range("no system named " + name + " in report");
}

namespace {

const std::string& reference_of(const NBestList& list) {
  if (!list.ref) throw std::invalid_argument("utterance " + list.utt_id + " has no reference");
  return *list.ref;
}

}  // namespace

EvalReport evaluate(std::span<const NBestList> lists, std::span<const SystemSelections> systems) {
  EvalReport r;
  for (const auto& list : lists) {
    const std::string& ref = reference_of(list);
    if (list.hyps.empty()) throw std::invalid_argument("utterance " + list.utt_id + " has no hypotheses");
    r.utt_ids.push_back(list.utt_id);
    r.references.push_back(ref);
    r.baseline += wer_counts(ref, list.hyps[0].text);
    std::size_t best = 0;
    WerCounts best_counts = wer_counts(ref, list.hyps[0].text);
    for (std::size_t i = 1; i < list.hyps.size(); ++i) {
      const auto c = wer_counts(ref, list.hyps[i].text);
      if (c.edits < best_counts.edits) {
        best = i;
        best_counts = c;
      }
    }
    r.oracle += best_counts;
    r.oracle_selected.push_back(best);
  }
  r.baseline_wer = r.baseline.rate();
  r.oracle_wer = r.oracle.rate();

  for (const auto& sys : systems) {
    if (sys.selections.size() != lists.size()) {
      throw std::invalid_argument("system " + sys.name + " has " + std::to_string(sys.selections.size()) +
                                  " selections for " + std::to_string(lists.size()) + " utterances");
    }
    SystemResult out;
    out.name = sys.name;
    out.trainable = sys.trainable;
    out.weights = sys.weights;
    for (std::size_t i = 0; i < lists.size(); ++i) {
      const auto& sel = sys.selections[i];
      if (sel.index >= lists[i].hyps.size()) throw std::out_of_range("selection index outside the n-best list");
      out.selected.push_back(sel.index);
      out.counts += wer_counts(r.references[i], lists[i].hyps[sel.index].text);
      if (!sel.error.empty()) out.failures.push_back(lists[i].utt_id + ": " + sel.error);
    }
    out.wer = out.counts.rate();
    out.werr = werr(r.baseline_wer, out.wer);
    r.systems.push_back(std::move(out));
  }
  return r;
}

EvalReport evaluate(std::span<const NBestList> lists, std::span<const SystemSpec> systems,
                    std::size_t threads) {
  for (const auto& list : lists) reference_of(list);
  std::vector<SystemSelections> chosen;
  for (const auto& sys : systems) {
    chosen.push_back(SystemSelections{sys.name, sys.trainable, sys.weights,
                                      rescore(lists, sys.scorer, sys.weights, threads)});
  }
  return evaluate(lists, chosen);
}

nlohmann::json to_json(const EvalReport& report) {
  using nlohmann::json;
  json j;
  j["utterances"] = report.utt_ids.size();
  j["reference_words"] = report.baseline.ref_words;
  j["baseline"] = {{"wer", report.baseline_wer}, {"edits", report.baseline.edits}};
  j["oracle"] = {{"wer", report.oracle_wer}, {"edits", report.oracle.edits}, {"selected", report.oracle_selected}};
  j["utt_ids"] = report.utt_ids;
  j["systems"] = json::array();
  for (const auto& s : report.systems) {
    j["systems"].push_back({{"name", s.name},
                            {"trainable_params", s.trainable},
                            {"weights", {{"am", s.weights.am}, {"flm", s.weights.flm}, {"lm", s.weights.lm}}},
                            {"wer", s.wer},
                            {"werr", s.werr},
                            {"edits", s.counts.edits},
                            {"selected", s.selected},
                            {"failures", s.failures}});
  }
  return j;
}

namespace {

std::string fmt(const char* spec, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, x);
  return buf;
}

}  // namespace

std::string format_table(const EvalReport& report) {
  struct Row {
    std::string name, params, wer, werr;
  };
  std::vector<Row> rows{{"system", "trainable", "WER%", "WERR%"}};
  rows.push_back({"no-rescoring", "-", fmt("%.2f", 100 * report.baseline_wer), fmt("%.2f", 0.0)});
  for (const auto& s : report.systems) {
    rows.push_back({s.name, std::to_string(s.trainable), fmt("%.2f", 100 * s.wer), fmt("%.2f", s.werr)});
  }
  rows.push_back({"oracle", "-", fmt("%.2f", 100 * report.oracle_wer),
                  fmt("%.2f", werr(report.baseline_wer, report.oracle_wer))});
  std::size_t w0 = 0, w1 = 0, w2 = 0, w3 = 0;
  for (const auto& r : rows) {
    w0 = std::max(w0, r.name.size());
    w1 = std::max(w1, r.params.size());
    w2 = std::max(w2, r.wer.size());
    w3 = std::max(w3, r.werr.size());
  }
  std::ostringstream out;
  auto pad_left = [](const std::string& s, std::size_t w) { return std::string(w - s.size(), ' ') + s; };
  for (const auto& r : rows) {
    out << r.name << std::string(w0 - r.name.size(), ' ') << "  " << pad_left(r.params, w1) << "  "
        << pad_left(r.wer, w2) << "  " << pad_left(r.werr, w3) << '\n';
  }
  return out.str();
}

std::string check_consistency(const EvalReport& report, std::span<const NBestList> lists) {
  std::vector<SystemSelections> again;
  for (const auto& s : report.systems) {
    SystemSelections sel{s.name, s.trainable, s.weights, {}};
    if (s.selected.size() != lists.size()) return s.name + ": selection count mismatch";
    for (std::size_t i = 0; i < lists.size(); ++i) {
      if (s.selected[i] >= lists[i].hyps.size()) return s.name + ": selection out of range";
      sel.selections.push_back(Selection{lists[i].utt_id, s.selected[i], lists[i].hyps[s.selected[i]].text, {}});
    }
    again.push_back(std::move(sel));
  }
  const EvalReport fresh = evaluate(lists, again);
  if (fresh.baseline.edits != report.baseline.edits) return "baseline edits differ";
  if (fresh.oracle.edits != report.oracle.edits) return "oracle edits differ";
  for (std::size_t i = 0; i < fresh.systems.size(); ++i) {
    const auto& a = fresh.systems[i];
    const auto& b = report.systems[i];
    if (a.counts.edits != b.counts.edits) return b.name + ": edits differ";
    if (std::abs(a.werr - b.werr) > 1e-9) return b.name + ": WERR differs";
  }
  return {};
}

}  // namespace dprompt::rescore
