#include "sekge/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <tuple>

#include "sekge/checkpoint.hpp"
#include "sekge/csv.hpp"
#include "sekge/error.hpp"
#include "sekge/evaluation.hpp"

namespace sekge {

template <typename T>
Tensor<T> multi_hot_targets(std::span<const QueryGroup> batch, std::size_t num_entities) {
  Tensor<T> targets({batch.size(), num_entities});
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].answers.empty()) {
      throw DataError("query (" + std::to_string(batch[i].head) + ", " +
                      std::to_string(batch[i].relation) + ") has no answer");
    }
    for (EntityId t : batch[i].answers) targets(i, static_cast<std::size_t>(t)) = T(1);
  }
  return targets;
}

template <typename T>
Tensor<T> smooth_labels(const Tensor<T>& targets, double label_smoothing) {
  const std::size_t n = targets.rank() == 2 ? targets.dim(1) : targets.size();
  const double floor = label_smoothing / static_cast<double>(n);
  Tensor<T> out = targets;
  for (auto& y : out.values()) {
    y = static_cast<T>(static_cast<double>(y) * (1.0 - label_smoothing) + floor);
  }
  return out;
}

template <typename T>
Var<T> bce_loss(Var<T> logits, const Tensor<T>& targets, double label_smoothing) {
  const std::size_t rows = targets.rank() == 2 ? targets.dim(0) : 1;
  const std::size_t cols = targets.size() / std::max<std::size_t>(rows, 1);
  for (std::size_t i = 0; i < rows; ++i) {
    const T* row = targets.data() + i * cols;
    if (std::none_of(row, row + cols, [](T y) { return y > T(0); })) {
      throw DataError("target row " + std::to_string(i) + " has no positive answer");
    }
  }
  return bce_with_logits(logits, smooth_labels(targets, label_smoothing));
}

std::optional<std::size_t> find_aug_edge(const TripleStore& store, const Triple& edge) {
  const auto edges = store.aug_edges();
  const auto key = [](const Triple& t) { return std::tie(t.tail, t.head, t.relation); };
  auto it = std::lower_bound(edges.begin(), edges.end(), edge,
                             [&](const Triple& a, const Triple& b) { return key(a) < key(b); });
  if (it == edges.end() || *it != edge) return std::nullopt;
  return static_cast<std::size_t>(it - edges.begin());
}

AggregationGraph batch_graph(const TripleStore& store, std::span<const QueryGroup> batch,
                             double removal_rate, bool leakage_removal, std::mt19937_64& rng,
                             std::vector<char>* kept_out) {
  const auto edges = store.aug_edges();
  std::vector<char> kept(edges.size(), 1);
  if (leakage_removal) {
    for (const auto& g : batch) {
      for (EntityId t : g.answers) {
        if (auto i = find_aug_edge(store, {g.head, g.relation, t})) {
          kept[*i] = 0;
          kept[store.aug_twin(*i)] = 0;
        }
      }
    }
  }
  if (removal_rate > 0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& k : kept) {
      if (u(rng) < removal_rate) k = 0;
    }
  }
  AggregationGraph graph;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (!kept[i]) continue;
    graph.src.push_back(edges[i].head);
    graph.rel.push_back(edges[i].relation);
    graph.dst.push_back(edges[i].tail);
  }
  if (kept_out != nullptr) *kept_out = std::move(kept);
  return graph;
}

template <typename T>
Trainer<T>::Trainer(SeGnnModel<T>& model, const TripleStore& store, const TrainConfig& config)
    : model_(model),
      store_(store),
      config_(config),
      groups_(store.train_query_groups()),
      rng_(config.seed + 1) {
  adam_options_.lr = config.lr;
  adam_options_.beta1 = config.adam_beta1;
  adam_options_.beta2 = config.adam_beta2;
  adam_options_.eps = config.adam_eps;
}

template <typename T>
double Trainer<T>::train_batch(std::span<const QueryGroup> batch) {
  const auto graph =
      batch_graph(store_, batch, config_.edge_removal_rate, config_.leakage_removal, rng_);
  if (on_batch) on_batch(batch, graph);

  IndexList heads, relations;
  for (const auto& g : batch) {
    heads.push_back(g.head);
    relations.push_back(g.relation);
  }
  const auto targets = multi_hot_targets<T>(batch, store_.num_entities());

  Tape<T> tape(true);
  const auto logits = model_.forward(tape, graph, heads, relations, true, rng_);
  const auto loss = bce_loss(logits, targets, config_.label_smoothing);
  const double value = static_cast<double>(loss.value()[0]);
  if (!std::isfinite(value)) {
    throw DataError("non-finite loss at epoch " + std::to_string(epoch_ + 1) + ", batch " +
                    std::to_string(batch_index_) + " (seed " + std::to_string(config_.seed) +
                    ")");
  }
  tape.backward(loss);
  const auto params = model_.parameters();
  adam_step<T>(params, adam_, adam_options_);
  ++batch_index_;
  return value;
}

template <typename T>
double Trainer<T>::train_epoch() {
  std::shuffle(groups_.begin(), groups_.end(), rng_);
  batch_index_ = 0;
  double total = 0;
  for (std::size_t start = 0; start < groups_.size(); start += config_.batch_size) {
    const std::size_t end = std::min(groups_.size(), start + config_.batch_size);
    const std::span<const QueryGroup> batch(groups_.data() + start, end - start);
    total += train_batch(batch) * static_cast<double>(batch.size());
  }
  ++epoch_;
  return groups_.empty() ? 0.0 : total / static_cast<double>(groups_.size());
}

template <typename T>
FitResult fit(SeGnnModel<T>& model, const TripleStore& store, const TrainConfig& config,
              const FitOptions& options) {
  if (store.split(Split::valid).empty()) throw DataError("training needs a non-empty valid split");
  Trainer<T> trainer(model, store, config);
  const EvalOptions eval_options{config.eval_batch_size, 0.0};
  const auto start = std::chrono::steady_clock::now();

  FitResult result;
  result.best_valid_mrr = -1;
  std::vector<Tensor<T>> best_state;
  std::size_t evals_since_best = 0;

  const auto evaluate = [&](std::size_t epoch) {
    const double mrr = compute_metrics(rank_queries(model, store, Split::valid, eval_options)).mrr;
    ++result.evaluations;
    if (result.evaluations == 1 || mrr > result.best_valid_mrr) {
      result.best_valid_mrr = mrr;
      result.best_epoch = epoch;
      evals_since_best = 0;
      best_state.clear();
      for (const auto& [name, tensor] : model.state()) best_state.push_back(*tensor);
      if (!options.out_dir.empty()) {
        save_checkpoint(options.out_dir, model, config, store.vocab(), epoch, mrr);
      }
    } else {
      ++evals_since_best;
    }
    return mrr;
  };

  if (options.log != nullptr) *options.log << "epoch,loss,valid_mrr,elapsed_s\n";
  if (config.epochs == 0) evaluate(0);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const double loss = trainer.train_epoch();
    result.epoch_losses.push_back(loss);
    result.epochs_run = epoch;
    const bool eval_now = epoch % config.eval_every == 0 || epoch == config.epochs;
    const double mrr = eval_now ? evaluate(epoch) : std::numeric_limits<double>::quiet_NaN();
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (options.log != nullptr) {
      *options.log << epoch << ',' << format_number(loss) << ','
                   << (eval_now ? format_number(mrr) : "") << ',' << std::fixed
                   << std::setprecision(3) << elapsed << std::defaultfloat << '\n';
      options.log->flush();
    }
    if (options.progress != nullptr) {
      *options.progress << "epoch " << epoch << " loss " << loss;
      if (eval_now) *options.progress << " valid_mrr " << mrr;
      *options.progress << '\n';
    }
    if (eval_now && evals_since_best >= config.patience) break;
  }

  const auto state = model.state();
  for (std::size_t i = 0; i < best_state.size(); ++i) *state[i].second = best_state[i];
  return result;
}

#define SEKGE_INSTANTIATE(T)                                                               \
  template Tensor<T> multi_hot_targets<T>(std::span<const QueryGroup>, std::size_t);       \
  template Tensor<T> smooth_labels<T>(const Tensor<T>&, double);                           \
  template Var<T> bce_loss<T>(Var<T>, const Tensor<T>&, double);                           \
  template class Trainer<T>;                                                               \
  template FitResult fit<T>(SeGnnModel<T>&, const TripleStore&, const TrainConfig&,        \
                            const FitOptions&);

SEKGE_INSTANTIATE(float)
SEKGE_INSTANTIATE(double)
#undef SEKGE_INSTANTIATE

}  // namespace sekge
