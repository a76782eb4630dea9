#include "dprompt/harness/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "dprompt/util/random.hpp"

namespace dprompt::harness {

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(line);
  }
  return out;
}

void write_lines(const std::filesystem::path& path, std::span<const std::string> lines) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
}

Split split_corpus(std::span<const std::string> corpus, double ratio, std::uint64_t seed) {
  if (corpus.size() < 2) throw std::invalid_argument("split_corpus: need at least two lines");
  if (!(ratio > 0 && ratio < 1)) throw std::invalid_argument("split_corpus: ratio must lie in (0, 1)");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = make_rng(seed, "split");
  // Fisher-Yates with an explicit draw so the permutation is identical across standard libraries.
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::swap(order[i], order[rng() % (i + 1)]);
  }
  const auto n = corpus.size();
  const auto n_train = std::clamp<std::size_t>(std::size_t(std::llround(ratio * double(n))), 1, n - 1);
  Split s;
  for (std::size_t i = 0; i < n; ++i) (i < n_train ? s.train : s.dev).push_back(corpus[order[i]]);
  return s;
}

}  // namespace dprompt::harness
