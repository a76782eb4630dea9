#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dprompt::rescore {

struct Hypothesis {
  std::string text;
  double am_score = 0;   // log domain
  double flm_score = 0;  // log domain
};

/// First hypothesis is the first-pass 1-best.
struct NBestList {
  std::string utt_id;
  std::optional<std::string> ref;
  std::vector<Hypothesis> hyps;
};

class NBestFormatError : public std::runtime_error {
 public:
  NBestFormatError(std::size_t line, const std::string& detail, const std::string& source = {})
      : std::runtime_error((source.empty() ? "" : source + ": ") + "line " + std::to_string(line) +
                           ": " + detail),
        line_(line),
        detail_(detail) {}
  std::size_t line() const noexcept { return line_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::size_t line_;
  std::string detail_;
};

/// JSON lines: {"utt_id", "ref"?, "hyps": [{"text", "am_score", "flm_score"}, ...]}.
/// Blank lines are skipped; line numbers in errors are 1-based.
std::vector<NBestList> parse_nbest(std::istream& in);
std::vector<NBestList> load_nbest(const std::filesystem::path& path);

void write_nbest(std::ostream& out, const std::vector<NBestList>& lists);
void save_nbest(const std::filesystem::path& path, const std::vector<NBestList>& lists);

}  // namespace dprompt::rescore
