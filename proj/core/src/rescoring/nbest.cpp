#include "dprompt/rescoring/nbest.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

namespace dprompt::rescore {

namespace {

using nlohmann::json;

const json& require(const json& obj, const char* field, std::size_t line, const char* where) {
  const auto it = obj.find(field);
  if (it == obj.end()) {
    throw NBestFormatError(line, std::string("missing field \"") + field + "\" in " + where);
  }
  return *it;
}

double require_score(const json& hyp, const char* field, std::size_t line) {
  const json& v = require(hyp, field, line, "hypothesis");
  if (!v.is_number()) throw NBestFormatError(line, std::string("field \"") + field + "\" is not a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw NBestFormatError(line, std::string("field \"") + field + "\" is not finite");
  return x;
}

std::string require_string(const json& obj, const char* field, std::size_t line, const char* where) {
  const json& v = require(obj, field, line, where);
  if (!v.is_string()) throw NBestFormatError(line, std::string("field \"") + field + "\" is not a string");
  return v.get<std::string>();
}

}  // namespace

std::vector<NBestList> parse_nbest(std::istream& in) {
  std::vector<NBestList> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw NBestFormatError(line, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw NBestFormatError(line, "expected a JSON object");

    NBestList list;
    list.utt_id = require_string(j, "utt_id", line, "utterance");
    if (const auto it = j.find("ref"); it != j.end() && !it->is_null()) {
      if (!it->is_string()) throw NBestFormatError(line, "field \"ref\" is not a string");
      list.ref = it->get<std::string>();
    }
    const json& hyps = require(j, "hyps", line, "utterance");
    if (!hyps.is_array()) throw NBestFormatError(line, "field \"hyps\" is not an array");
    if (hyps.empty()) throw NBestFormatError(line, "empty hypothesis list");
    for (const auto& h : hyps) {
      if (!h.is_object()) throw NBestFormatError(line, "hypothesis is not an object");
      list.hyps.push_back(Hypothesis{require_string(h, "text", line, "hypothesis"),
                                     require_score(h, "am_score", line),
                                     require_score(h, "flm_score", line)});
    }
    out.push_back(std::move(list));
  }
  return out;
}

std::vector<NBestList> load_nbest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open n-best file " + path.string());
  try {
    return parse_nbest(in);
  } catch (const NBestFormatError& e) {
    throw NBestFormatError(e.line(), e.detail(), path.string());
  }
}

void write_nbest(std::ostream& out, const std::vector<NBestList>& lists) {
  for (const auto& list : lists) {
    json j;
    j["utt_id"] = list.utt_id;
    if (list.ref) j["ref"] = *list.ref;
    j["hyps"] = json::array();
    for (const auto& h : list.hyps) {
      j["hyps"].push_back({{"text", h.text}, {"am_score", h.am_score}, {"flm_score", h.flm_score}});
    }
    out << j.dump() << '\n';
  }
}

void save_nbest(const std::filesystem::path& path, const std::vector<NBestList>& lists) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write n-best file " + path.string());
  write_nbest(out, lists);
}

}  // namespace dprompt::rescore
