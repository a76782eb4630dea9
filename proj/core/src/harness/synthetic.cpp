#include "dprompt/harness/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "dprompt/harness/corpus.hpp"
#include "dprompt/rescoring/wer.hpp"
#include "dprompt/tokenizer/vocab.hpp"

namespace dprompt::harness {

namespace {

using SlotMap = std::map<std::string, std::vector<std::string>>;

struct DomainData {
  std::vector<std::string> templates;
  SlotMap slots;
};

// Carrier sentences shared by every task domain; only the {item} word tells them apart.
const std::vector<std::string> kCarriers = {
    "i want to check my {item}",
    "can you help me with my {item}",
    "i need to cancel my {item}",
    "what is the status of my {item}",
    "i have a question about my {item}",
    "please update my {item}",
    "is my {item} ready",
    "how much does the {item} cost",
    "i would like to change my {item}",
    "can i get a new {item}",
    "there is a problem with my {item}",
    "i called about my {item} yesterday",
};

const std::vector<std::string> kNumbers = {"one", "two", "three", "four", "five", "six", "eight", "ten"};
const std::vector<std::string> kDays = {"monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"};
const std::vector<std::string> kCities = {"boston", "denver", "chicago", "seattle", "dallas", "atlanta", "miami", "phoenix"};

const std::vector<std::vector<std::string>> kHomophones = {
    {"to", "two", "too"}, {"for", "four"},   {"there", "their"}, {"hear", "here"},
    {"know", "no"},       {"right", "write"}, {"by", "buy"},     {"eight", "ate"},
    {"one", "won"},       {"see", "sea"},     {"our", "hour"},   {"new", "knew"},
    {"weather", "whether"}, {"would", "wood"}, {"i", "eye"},     {"be", "bee"},
};

DomainData airlines() {
  DomainData d;
  d.templates = {
      "book a flight from {city} to {city} on {day}",
      "i need a {class} seat on the {time} flight to {city}",
      "when does the flight to {city} depart",
      "is the {time} flight to {city} delayed",
      "i want to add {number} bags to my {item}",
      "can i upgrade to {class} class on {day}",
      "my {item} to {city} was cancelled",
      "how many miles do i have for the {city} trip",
      "i missed my connection in {city}",
      "please send my {item} for the {day} flight",
      "which gate does the {time} flight leave from",
      "i lost my {item} at the airport in {city}",
  };
  d.slots = {
      {"item", {"flight", "ticket", "seat", "baggage", "reservation", "upgrade", "itinerary", "luggage", "miles", "boarding"}},
      {"city", kCities},
      {"day", kDays},
      {"time", {"morning", "afternoon", "evening", "night", "early", "late"}},
      {"class", {"economy", "business", "first", "premium"}},
      {"number", kNumbers},
  };
  return d;
}

DomainData fastfood() {
  DomainData d;
  d.templates = {
      "can i get a {size} {food} with {side}",
      "i would like {number} {food} and a {size} {drink}",
      "add extra cheese to my {food}",
      "do you have a {food} combo with {side}",
      "my {item} is missing the {side}",
      "is the {food} spicy",
      "can i get a {size} {drink} with no ice",
      "how long will my {item} take",
      "i want to order {number} {food} for pickup",
      "replace the {side} with a {side}",
      "please make my {food} without onions",
      "is the {item} still hot",
  };
  d.slots = {
      {"item", {"burger", "fries", "order", "milkshake", "combo", "nuggets", "sandwich", "coupon", "delivery", "drink"}},
      {"food", {"burger", "cheeseburger", "chicken", "pizza", "taco", "hotdog", "wrap"}},
      {"side", {"fries", "salad", "coleslaw", "rings", "chips", "beans"}},
      {"drink", {"cola", "lemonade", "coffee", "tea", "water", "milkshake"}},
      {"size", {"small", "medium", "large"}},
      {"number", kNumbers},
  };
  return d;
}

DomainData healthcare() {
  DomainData d;
  d.templates = {
      "i need to see a {specialist} on {day}",
      "schedule an appointment for my {symptom}",
      "can i refill my {medication} prescription",
      "i have had a {symptom} since {day}",
      "is the {specialist} available in the {time}",
      "when will my lab {item} be ready",
      "does my plan cover the {specialist} visit",
      "i need a referral to a {specialist}",
      "what are the side effects of {medication}",
      "my child has a {symptom} and a {symptom}",
      "please move my {item} to {day}",
      "the {specialist} said to take {medication} twice a day",
  };
  d.slots = {
      {"item", {"appointment", "prescription", "referral", "checkup", "vaccine", "results", "doctor", "refill", "diagnosis", "therapy"}},
      {"specialist", {"cardiologist", "dermatologist", "dentist", "pediatrician", "surgeon", "therapist", "nurse"}},
      {"symptom", {"headache", "fever", "cough", "rash", "allergy", "backache", "sore"}},
      {"medication", {"ibuprofen", "insulin", "antibiotics", "inhaler", "aspirin", "vitamins"}},
      {"day", kDays},
      {"time", {"morning", "afternoon", "evening"}},
  };
  return d;
}

DomainData insurance() {
  DomainData d;
  d.templates = {
      "i want to file a claim for my {vehicle}",
      "my {vehicle} was damaged in a {event}",
      "how much is the deductible for {event} damage",
      "can i add my {vehicle} to my {item}",
      "get me a quote for {vehicle} insurance",
      "my {item} went up by {number} hundred dollars",
      "does my policy cover {event} damage",
      "when is my {item} due",
      "i need proof of {item} for my {vehicle}",
      "who is the adjuster on my {item}",
      "a {event} hit my {vehicle} last {day}",
      "i want to lower my {item} on the {vehicle}",
  };
  d.slots = {
      {"item", {"claim", "policy", "premium", "deductible", "coverage", "quote", "renewal", "payment", "accident", "beneficiary"}},
      {"vehicle", {"car", "truck", "home", "boat", "motorcycle", "house", "van"}},
      {"event", {"accident", "flood", "fire", "theft", "storm", "hail", "collision"}},
      {"number", kNumbers},
      {"day", kDays},
  };
  return d;
}

DomainData generic() {
  DomainData d;
  d.templates = {
      "how are you doing today",
      "what is the weather like in {city}",
      "will it rain in {city} on {day}",
      "tell me a joke about a {animal}",
      "set an alarm for {number} in the morning",
      "play some {genre} music",
      "i want to go to the {place} with my {person}",
      "remind me to call my {person} at {number}",
      "what time is it in {city}",
      "i think i left my keys at the {place}",
      "can you read me the news",
      "how far is the {place} from here",
      "my {person} has a {animal}",
      "i need to buy milk and bread at the {place}",
      "do you know the way to the {place}",
      "i can hear the {animal} outside",
      "we are going to the {place} for {number} hours",
      "i would like to know the score of the game",
      "write a note to my {person}",
      "i ate {food} for dinner",
      "turn the lights off in the kitchen",
      "there are {number} people at the {place}",
      "their {animal} is very loud",
      "it is too cold in {city} right now",
      "thank you that is all for now",
      "no i do not know the answer",
      "i will be there in {number} minutes",
      "the sea is right by the {place}",
      "our {person} knew the way to {city}",
      "i wonder whether it will snow on {day}",
      "the table is made of wood",
      "my team won the game by {number} points",
      "can you see the {animal} over there",
      "my {person} has an eye doctor visit on {day}",
      "a bee landed on my {food}",
      "i want to be at the {place} in an hour",
  };
  d.slots = {
      {"city", kCities},
      {"day", kDays},
      {"animal", {"cat", "dog", "bird", "horse", "fish", "rabbit"}},
      {"genre", {"jazz", "rock", "pop", "classical", "country"}},
      {"place", {"park", "store", "library", "beach", "gym", "office", "station"}},
      {"person", {"mom", "dad", "friend", "sister", "brother", "neighbor"}},
      {"number", kNumbers},
      {"food", {"pasta", "soup", "pizza", "rice", "salad"}},
  };
  return d;
}

DomainData domain_data(const std::string& name) {
  if (name == "airlines") return airlines();
  if (name == "fastfood") return fastfood();
  if (name == "healthcare") return healthcare();
  if (name == "insurance") return insurance();
  throw std::invalid_argument("unknown built-in domain " + name);
}

void add_homophones(std::map<std::string, std::vector<std::string>>& table) {
  for (const auto& group : kHomophones) {
    for (const auto& w : group) {
      for (const auto& other : group) {
        if (other != w) table[w].push_back(other);
      }
    }
  }
}

std::vector<std::string> placeholders(const std::string& tmpl) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while ((pos = tmpl.find('{', pos)) != std::string::npos) {
    const auto end = tmpl.find('}', pos);
    if (end == std::string::npos) throw std::invalid_argument("unterminated placeholder in \"" + tmpl + "\"");
    out.push_back(tmpl.substr(pos + 1, end - pos - 1));
    pos = end + 1;
  }
  return out;
}

std::size_t uniform_index(Rng& rng, std::size_t n) { return std::size_t(rng() % n); }

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

// One corrupted copy of the reference; when the swap probability is positive at least one
// eligible word changes.
std::vector<std::string> corrupt(const std::vector<std::string>& ref, const CorruptionModel& m, Rng& rng) {
  std::vector<std::string> out = ref;
  if (m.swap_probability <= 0) return out;
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const auto it = m.confusables.find(ref[i]);
    if (it != m.confusables.end() && !it->second.empty()) eligible.push_back(i);
  }
  if (eligible.empty()) return out;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  bool changed = false;
  for (std::size_t i : eligible) {
    if (u(rng) < m.swap_probability) {
      const auto& alts = m.confusables.at(ref[i]);
      out[i] = alts[uniform_index(rng, alts.size())];
      changed = changed || out[i] != ref[i];
    }
  }
  if (!changed) {
    const std::size_t i = eligible[uniform_index(rng, eligible.size())];
    const auto& alts = m.confusables.at(ref[i]);
    out[i] = alts[uniform_index(rng, alts.size())];
  }
  return out;
}

}  // namespace

void SyntheticDomainSpec::validate() const {
  if (templates.empty()) throw std::invalid_argument("synthetic spec " + name + ": no templates");
  bool any_slot = false;
  for (const auto& t : templates) {
    for (const auto& slot : placeholders(t)) {
      any_slot = true;
      const auto it = slots.find(slot);
      if (it == slots.end() || it->second.empty()) {
        throw std::invalid_argument("synthetic spec " + name + ": slot {" + slot + "} has no values");
      }
    }
  }
  if (!any_slot) throw std::invalid_argument("synthetic spec " + name + ": templates have no slots");
  if (!(corruption.swap_probability >= 0 && corruption.swap_probability <= 1)) {
    throw std::invalid_argument("synthetic spec " + name + ": swap probability must lie in [0, 1]");
  }
  if (corruption.nbest == 0) throw std::invalid_argument("synthetic spec " + name + ": n-best size is zero");
  if (!(corruption.truth_missing_rate >= 0 && corruption.truth_missing_rate <= 0.1)) {
    throw std::invalid_argument("synthetic spec " + name + ": truth_missing_rate must lie in [0, 0.1]");
  }
}

std::string sample_sentence(const SyntheticDomainSpec& spec, Rng& rng) {
  const std::string& tmpl = spec.templates[uniform_index(rng, spec.templates.size())];
  std::string out;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find('{', pos);
    if (open == std::string::npos) {
      out += tmpl.substr(pos);
      break;
    }
    const auto close = tmpl.find('}', open);
    out += tmpl.substr(pos, open - pos);
    const auto& values = spec.slots.at(tmpl.substr(open + 1, close - open - 1));
    out += values[uniform_index(rng, values.size())];
    pos = close + 1;
  }
  return out;
}

SyntheticDomain synthesize_domain(const SyntheticDomainSpec& spec) {
  spec.validate();
  SyntheticDomain d;
  d.name = spec.name;
  auto corpus_rng = make_rng(spec.seed, "corpus/" + spec.name);
  for (std::size_t i = 0; i < spec.sentences; ++i) d.corpus.push_back(sample_sentence(spec, corpus_rng));

  const auto& m = spec.corruption;
  auto eval_rng = make_rng(spec.seed, "eval/" + spec.name);
  auto rng = make_rng(spec.seed, "corruption/" + spec.name);
  std::normal_distribution<double> noise(0.0, m.score_noise);

  // An exact share of lists drops the reference, so "present in ≥ 90%" holds for any seed.
  const auto n_missing = std::size_t(m.truth_missing_rate * double(spec.eval_utterances));
  std::vector<std::size_t> order(spec.eval_utterances);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::set<std::size_t> missing(order.begin(), order.begin() + std::ptrdiff_t(n_missing));

  for (std::size_t u = 0; u < spec.eval_utterances; ++u) {
    const std::string ref = sample_sentence(spec, eval_rng);
    const auto ref_words = tok::split_words(ref);
    const bool corruptible = std::any_of(ref_words.begin(), ref_words.end(), [&](const std::string& w) {
      const auto it = m.confusables.find(w);
      return it != m.confusables.end() && !it->second.empty();
    });
    const bool keep_truth = m.swap_probability <= 0 || !corruptible || !missing.contains(u);

    std::vector<std::string> texts;
    std::set<std::string> seen;
    if (keep_truth) {
      texts.push_back(ref);
      seen.insert(ref);
    } else {
      seen.insert(ref);
    }
    std::size_t attempts = 0;
    while (texts.size() < m.nbest) {
      const std::string variant = join(corrupt(ref_words, m, rng));
      ++attempts;
      // Short sentences may not have n distinct corruptions; fall back to repeats.
      if (seen.insert(variant).second || m.swap_probability <= 0 || attempts > 50 * m.nbest) {
        if (variant == ref && !keep_truth && m.swap_probability > 0) continue;
        texts.push_back(variant);
      }
    }

    struct Scored {
      rescore::Hypothesis hyp;
      double total;
    };
    std::vector<Scored> scored;
    for (const auto& t : texts) {
      const auto edits = double(rescore::wer_counts(ref, t).edits);
      const double len = double(ref_words.size());
      rescore::Hypothesis h{t, -1.5 * len - m.am_edit_penalty * edits + noise(rng),
                            -2.0 * len - m.flm_edit_penalty * edits + noise(rng)};
      scored.push_back({h, h.am_score + h.flm_score});
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const Scored& a, const Scored& b) { return a.total > b.total; });

    rescore::NBestList list;
    char id[64];
    std::snprintf(id, sizeof id, "%s-%05zu", spec.name.c_str(), u);
    list.utt_id = id;
    list.ref = ref;
    for (auto& s : scored) list.hyps.push_back(std::move(s.hyp));
    d.nbest.push_back(std::move(list));
  }
  return d;
}

std::vector<std::string> builtin_domains() { return {"airlines", "fastfood", "healthcare", "insurance"}; }

SyntheticDomainSpec builtin_domain(const std::string& name, std::size_t sentences, std::uint64_t seed) {
  const DomainData own = domain_data(name);
  SyntheticDomainSpec spec;
  spec.name = name;
  spec.templates = kCarriers;
  spec.templates.insert(spec.templates.end(), own.templates.begin(), own.templates.end());
  spec.slots = own.slots;
  spec.sentences = sentences;
  spec.seed = seed;

  // Slot words are confused with what the other domains put in the same slot, or with any other
  // domain's slot words when no other domain has that slot.
  std::map<std::string, std::set<std::string>> same_slot;
  std::set<std::string> any_other;
  for (const auto& other_name : builtin_domains()) {
    if (other_name == name) continue;
    for (const auto& [slot, values] : domain_data(other_name).slots) {
      for (const auto& v : values) {
        same_slot[slot].insert(v);
        any_other.insert(v);
      }
    }
  }
  auto& table = spec.corruption.confusables;
  add_homophones(table);
  std::set<std::string> own_words;
  for (const auto& [slot, values] : own.slots) own_words.insert(values.begin(), values.end());
  for (const auto& [slot, values] : own.slots) {
    const auto& pool = same_slot.contains(slot) ? same_slot[slot] : any_other;
    for (const auto& v : values) {
      if (table.contains(v)) continue;  // homophones keep their own alternatives
      auto& alts = table[v];
      for (const auto& w : pool) {
        if (!own_words.contains(w)) alts.push_back(w);
      }
      if (alts.empty()) table.erase(v);
    }
  }
  return spec;
}

SyntheticDomainSpec generic_spec(std::size_t sentences, std::uint64_t seed) {
  const DomainData g = generic();
  SyntheticDomainSpec spec;
  spec.name = "generic";
  spec.templates = g.templates;
  spec.slots = g.slots;
  spec.sentences = sentences;
  spec.seed = seed;
  add_homophones(spec.corruption.confusables);
  return spec;
}

std::vector<std::string> pretraining_pool(std::uint64_t seed, std::size_t generic_sentences,
                                          std::size_t per_domain) {
  std::vector<std::string> pool;
  const auto g = generic_spec(generic_sentences, seed);
  auto rng = make_rng(seed, "pool/generic");
  for (std::size_t i = 0; i < generic_sentences; ++i) pool.push_back(sample_sentence(g, rng));
  for (const auto& name : builtin_domains()) {
    const auto spec = builtin_domain(name, per_domain, seed);
    auto drng = make_rng(seed, "pool/" + name);
    for (std::size_t i = 0; i < per_domain; ++i) pool.push_back(sample_sentence(spec, drng));
  }
  return pool;
}

void write_synthetic(const std::filesystem::path& dir, const SyntheticDomain& domain) {
  std::filesystem::create_directories(dir);
  write_lines(dir / (domain.name + ".txt"), domain.corpus);
  rescore::save_nbest(dir / (domain.name + ".nbest.jsonl"), domain.nbest);
}

std::size_t size_for(const std::string& setting) {
  if (setting == "low") return 1000;
  if (setting == "large") return 50000;
  throw std::invalid_argument("unknown data size \"" + setting + "\" (expected low or large)");
}

}  // namespace dprompt::harness
