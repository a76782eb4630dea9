#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "dprompt/adaptation/prompt.hpp"
#include "dprompt/model/model.hpp"
#include "dprompt/numerics/ops.hpp"
#include "dprompt/util/random.hpp"

using namespace dprompt;

namespace {

struct Fixture {
  tok::Vocab vocab;
  lm::Model<float> model;
  tok::TokenSequence sentence;
};

tok::Vocab make_vocab(std::size_t n) {
  std::vector<std::string> words;
  for (std::size_t i = 0; i < n; ++i) words.push_back("w" + std::to_string(i));
  return tok::Vocab::from_tokens(std::move(words));
}

const Fixture& fixture() {
  static const Fixture f = [] {
    lm::ModelConfig c;  // 4 layers, d=64
    c.max_positions = 256;
    auto vocab = make_vocab(c.vocab_size - tok::kReserved);
    auto model = lm::init_model<float>(c);
    tok::TokenSequence s;
    for (int i = 0; i < 12; ++i) s.ids.push_back(static_cast<tok::TokenId>(3 + (i * 37) % 1900));
    return Fixture{std::move(vocab), std::move(model), std::move(s)};
  }();
  return f;
}

adapt::DomainPrompt<float> prompt_of(std::size_t k) {
  const auto& f = fixture();
  std::vector<std::string> none;
  return adapt::init_prompt<float>(adapt::PromptInit::random, k, f.model, f.vocab, none, 7);
}

void BM_ScoreUncached(benchmark::State& state) {
  const auto& f = fixture();
  auto prompt = prompt_of(static_cast<std::size_t>(state.range(0)));
  lm::Conditioning<float> cond{&prompt.embeddings, nullptr, nullptr};
  for (auto _ : state) benchmark::DoNotOptimize(lm::sequence_score(f.model, f.sentence, cond));
}

void BM_ScoreCached(benchmark::State& state) {
  const auto& f = fixture();
  auto prompt = prompt_of(static_cast<std::size_t>(state.range(0)));
  auto cache = lm::build_prefix_cache(f.model, prompt);
  lm::Conditioning<float> cond{nullptr, &cache, nullptr};
  for (auto _ : state) benchmark::DoNotOptimize(lm::sequence_score(f.model, f.sentence, cond));
}

void BM_BuildCache(benchmark::State& state) {
  const auto& f = fixture();
  auto prompt = prompt_of(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(lm::build_prefix_cache(f.model, prompt));
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  num::Matrix<float> a(n, n), b(n, n);
  for (std::size_t i = 0; i < n * n; ++i) {
    a.data()[i] = u(rng);
    b.data()[i] = u(rng);
  }
  for (auto _ : state) benchmark::DoNotOptimize(num::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(2 * n * n * n));
}

}  // namespace

BENCHMARK(BM_ScoreUncached)->Arg(1)->Arg(50)->Arg(200)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ScoreCached)->Arg(1)->Arg(50)->Arg(200)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_BuildCache)->Arg(1)->Arg(50)->Arg(200)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
