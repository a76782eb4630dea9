#pragma once

// A tiny two-domain world: a backbone pretrained for a few epochs on both domains plus generic
// filler, small enough to build in well under a second.

#include <random>
#include <string>
#include <vector>

#include "dprompt/model/model.hpp"
#include "dprompt/model/training.hpp"
#include "dprompt/tokenizer/vocab.hpp"
#include "helpers.hpp"

namespace testing {

struct ToyWorld {
  dprompt::tok::Vocab vocab;
  dprompt::lm::Model<double> model;
  std::vector<std::string> flights_train, flights_dev;
  std::vector<std::string> food_train;
};

inline std::vector<std::string> toy_sentences(const std::vector<std::string>& heads,
                                              const std::vector<std::string>& tails, std::size_t n,
                                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(heads[rng() % heads.size()] + " " + tails[rng() % tails.size()]);
  }
  return out;
}

inline std::vector<dprompt::tok::TokenSequence> encode_all(const dprompt::tok::Vocab& v,
                                                           const std::vector<std::string>& lines) {
  std::vector<dprompt::tok::TokenSequence> out;
  for (const auto& l : lines) out.push_back(v.encode(l));
  return out;
}

inline ToyWorld make_toy_world(std::size_t epochs = 4) {
  const std::vector<std::string> heads{"i want to", "please help me", "can you", "i need to"};
  const auto flights = toy_sentences(heads, {"book a flight", "change my seat", "check my bag", "cancel the flight"}, 60, 1);
  const auto food = toy_sentences(heads, {"order a burger", "add some fries", "get a drink", "cancel the order"}, 60, 2);
  std::vector<std::string> pool(flights.begin(), flights.begin() + 20);
  pool.insert(pool.end(), food.begin(), food.begin() + 20);

  auto vocab = dprompt::tok::Vocab::build([&] {
    std::vector<std::string> all = flights;
    all.insert(all.end(), food.begin(), food.end());
    return all;
  }(), 200);
  auto config = tiny_config(1, 16, vocab.size());
  dprompt::lm::TrainHyper h;
  h.lr = 1e-2;
  h.epochs = epochs;
  h.batch_tokens = 64;
  h.seed = 3;
  const auto encoded = encode_all(vocab, pool);
  auto params = dprompt::lm::pretrain(config, dprompt::lm::init_parameters<double>(config), encoded, h).params;
  ToyWorld w{std::move(vocab), dprompt::lm::Model<double>(config, std::move(params)), {}, {}, {}};
  w.flights_train.assign(flights.begin() + 20, flights.begin() + 50);
  w.flights_dev.assign(flights.begin() + 50, flights.end());
  w.food_train.assign(food.begin() + 20, food.end());
  return w;
}

}  // namespace testing
