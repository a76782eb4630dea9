#include "dprompt/model/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dprompt/model/model.hpp"
#include "dprompt/numerics/adam.hpp"

namespace dprompt::lm {

std::vector<NodeId> parameter_nodes(const BoundModel& b) {
  std::vector<NodeId> out{b.token_embedding, b.position_embedding};
  for (const auto& L : b.layers) {
    out.insert(out.end(), {L.ln1_gain, L.ln1_bias, L.q_weight, L.q_bias, L.k_weight, L.k_bias,
                           L.v_weight, L.v_bias, L.out_weight, L.out_bias, L.ln2_gain, L.ln2_bias,
                           L.fc_weight, L.fc_bias, L.fc_out_weight, L.fc_out_bias});
  }
  out.push_back(b.final_gain);
  out.push_back(b.final_bias);
  return out;
}

std::vector<tok::TokenSequence> fit_to_positions(std::span<const tok::TokenSequence> corpus,
                                                 const ModelConfig& config,
                                                 std::size_t prefix_rows) {
  if (prefix_rows + 2 > config.max_positions) {
    throw std::invalid_argument("prefix of " + std::to_string(prefix_rows) +
                                " rows leaves no room for tokens");
  }
  const std::size_t limit = config.max_positions - 1 - prefix_rows;
  std::vector<tok::TokenSequence> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus) {
    if (s.ids.empty()) continue;
    tok::TokenSequence t = s;
    if (t.ids.size() > limit) t.ids.resize(limit);
    out.push_back(std::move(t));
  }
  return out;
}

template <typename T>
TrainHistory train(Objective<T>& objective, std::span<const tok::TokenSequence> train_set,
                   std::span<const tok::TokenSequence> dev_set, const TrainHyper& hyper) {
  if (train_set.empty()) throw std::invalid_argument("train: empty training corpus");
  if (hyper.batch_tokens == 0) throw std::invalid_argument("train: batch_tokens must be positive");
  auto params = objective.trainables();
  if (params.empty()) throw std::invalid_argument("train: nothing to train");

  num::Adam<T> adam(num::AdamSettings{hyper.lr});
  Rng shuffle_rng = make_rng(hyper.seed, "shuffle");
  Rng dropout_rng = make_rng(hyper.seed, "dropout");
  TrainHistory history;
  const bool use_dev = !dev_set.empty();

  std::vector<Matrix<T>> best;
  auto snapshot = [&] {
    best.clear();
    for (auto* p : params) best.push_back(*p);
  };
  if (use_dev) {
    history.best_dev_perplexity = objective.dev_perplexity(dev_set);
    history.dev_perplexity.push_back(history.best_dev_perplexity);
    snapshot();
  }

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Matrix<T>> grads;
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0;
    std::size_t epoch_tokens = 0;
    std::size_t i = 0;
    while (i < order.size()) {
      std::vector<const tok::TokenSequence*> batch;
      std::size_t tokens = 0;
      while (i < order.size() && (batch.empty() || tokens < hyper.batch_tokens)) {
        const auto* s = &train_set[order[i++]];
        if (tokens > 0 && tokens + s->ids.size() > hyper.batch_tokens) {
          --i;
          break;
        }
        batch.push_back(s);
        tokens += s->ids.size();
      }
      const double loss = objective.batch_loss(batch, dropout_rng, grads);
      std::vector<const Matrix<T>*> gptr;
      for (const auto& g : grads) gptr.push_back(&g);
      adam.step(params, gptr);
      history.step_losses.push_back(loss);
      epoch_loss += loss;
      epoch_tokens += tokens;
    }
    history.epoch_losses.push_back(epoch_loss / static_cast<double>(std::max<std::size_t>(1, epoch_tokens)));
    if (use_dev) {
      const double ppl = objective.dev_perplexity(dev_set);
      history.dev_perplexity.push_back(ppl);
      if (ppl < history.best_dev_perplexity) {
        history.best_dev_perplexity = ppl;
        history.best_epoch = epoch;
        snapshot();
        since_best = 0;
      } else if (hyper.patience > 0 && ++since_best >= hyper.patience) {
        break;
      }
    }
  }
  history.steps = adam.steps();
  if (use_dev) {
    for (std::size_t k = 0; k < params.size(); ++k) *params[k] = best[k];
  } else {
    history.best_epoch = history.epoch_losses.size();
  }
  return history;
}

template <typename T>
BackboneObjective<T>::BackboneObjective(const ModelConfig& config, Parameters<T>& params,
                                        TrainableSet trainable, double dropout,
                                        bool shift_positions)
    : config_(config),
      params_(params),
      trainable_(trainable),
      dropout_(dropout),
      shift_positions_(shift_positions) {}

template <typename T>
bool BackboneObjective<T>::selected(TensorGroup g) const {
  return g == TensorGroup::embedding ? trainable_.embedding : trainable_.transformer;
}

template <typename T>
std::vector<Matrix<T>*> BackboneObjective<T>::trainables() {
  std::vector<Matrix<T>*> out;
  params_.visit([&](const std::string&, Matrix<T>& m, TensorGroup g) {
    if (selected(g)) out.push_back(&m);
  });
  return out;
}

template <typename T>
double BackboneObjective<T>::batch_loss(std::span<const tok::TokenSequence* const> batch,
                                        Rng& dropout_rng, std::vector<Matrix<T>>& grads) {
  Tape<T> tape;
  const BoundModel bound = bind_model(tape, config_, params_, static_cast<const DomainAdapters<T>*>(nullptr), trainable_);
  Dropout<T> dropout{static_cast<T>(dropout_), &dropout_rng};
  std::optional<NodeId> total;
  for (const auto* seq : batch) {
    const auto inputs = shifted_inputs(seq->ids);
    std::size_t offset = 0;
    if (shift_positions_) {
      const std::size_t room = config_.max_positions - inputs.size();
      offset = static_cast<std::size_t>(dropout_rng() % (room + 1));
    }
    const NodeId logits = full_logits(tape, bound, std::nullopt, inputs, &dropout, offset);
    const NodeId loss = tape.nll(logits, seq->ids);
    total = total ? tape.add(*total, loss) : loss;
  }
  tape.backward(*total);
  grads.clear();
  const auto nodes = parameter_nodes(bound);
  std::size_t i = 0;
  params_.visit([&](const std::string&, const Matrix<T>&, TensorGroup g) {
    if (selected(g)) grads.push_back(tape.grad(nodes[i]));
    ++i;
  });
  return static_cast<double>(tape.value(*total)(0, 0));
}

template <typename T>
double BackboneObjective<T>::dev_perplexity(std::span<const tok::TokenSequence> dev) {
  double total = 0;
  std::size_t count = 0;
  const double floor = std::log(num::kProbabilityFloor);
  for (const auto& seq : dev) {
    const Matrix<T> logp = forward(config_, params_, std::span<const tok::TokenId>(seq.ids));
    for (std::size_t t = 0; t < seq.ids.size(); ++t) {
      total += std::max(static_cast<double>(logp(t, static_cast<std::size_t>(seq.ids[t]))), floor);
    }
    count += seq.ids.size();
  }
  return std::exp(-total / static_cast<double>(std::max<std::size_t>(1, count)));
}

template <typename T>
PretrainResult<T> pretrain(const ModelConfig& config, Parameters<T> params,
                           std::span<const tok::TokenSequence> corpus, const TrainHyper& hyper) {
  const auto fitted = fit_to_positions(corpus, config, 0);
  if (fitted.empty()) throw std::invalid_argument("pretrain: empty corpus");
  BackboneObjective<T> objective(config, params, TrainableSet{true, true, false}, config.dropout,
                                   hyper.shift_positions);
  TrainHyper h = hyper;
  auto history = train(objective, std::span<const tok::TokenSequence>(fitted), {}, h);
  return {std::move(params), std::move(history)};
}

template TrainHistory train<float>(Objective<float>&, std::span<const tok::TokenSequence>,
                                   std::span<const tok::TokenSequence>, const TrainHyper&);
template TrainHistory train<double>(Objective<double>&, std::span<const tok::TokenSequence>,
                                    std::span<const tok::TokenSequence>, const TrainHyper&);
template class BackboneObjective<float>;
template class BackboneObjective<double>;
template PretrainResult<float> pretrain<float>(const ModelConfig&, Parameters<float>,
                                               std::span<const tok::TokenSequence>,
                                               const TrainHyper&);
template PretrainResult<double> pretrain<double>(const ModelConfig&, Parameters<double>,
                                                 std::span<const tok::TokenSequence>,
                                                 const TrainHyper&);

}  // namespace dprompt::lm
