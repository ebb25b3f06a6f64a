#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "sekge/config.hpp"
#include "sekge/kg_core.hpp"
#include "sekge/model.hpp"
#include "sekge/optim.hpp"

namespace sekge {

using QueryGroup = TripleStore::QueryGroup;

/// Multi-hot 1-N targets [B x |E|] for a batch of train query groups. A group
/// without answers is fatal.
template <typename T>
Tensor<T> multi_hot_targets(std::span<const QueryGroup> batch, std::size_t num_entities);

/// y (1 - eps) + eps / |E|, elementwise.
template <typename T>
Tensor<T> smooth_labels(const Tensor<T>& targets, double label_smoothing);

/// Mean binary cross-entropy over every candidate of every query, computed
/// from logits against smoothed multi-hot targets. A target row without any
/// positive is fatal.
template <typename T>
Var<T> bce_loss(Var<T> logits, const Tensor<T>& targets, double label_smoothing);

/// Index of `edge` in store.aug_edges(), if present.
std::optional<std::size_t> find_aug_edge(const TripleStore& store, const Triple& edge);

/// Aggregation graph for one training batch: every edge answering a batch
/// query and its inverse twin are removed when `leakage_removal` is set,
/// then each remaining edge is dropped independently with probability
/// `removal_rate`. `kept`, when given, receives one flag per augmented edge.
AggregationGraph batch_graph(const TripleStore& store, std::span<const QueryGroup> batch,
                             double removal_rate, bool leakage_removal, std::mt19937_64& rng,
                             std::vector<char>* kept = nullptr);

/// Mini-batch 1-N trainer over the grouped train queries.
template <typename T>
class Trainer {
 public:
  Trainer(SeGnnModel<T>& model, const TripleStore& store, const TrainConfig& config);

  /// One pass over the shuffled query groups; returns the query-weighted
  /// mean batch loss.
  double train_epoch();

  /// One optimisation step on `batch`; returns the batch loss.
  double train_batch(std::span<const QueryGroup> batch);

  std::size_t epochs_done() const { return epoch_; }
  std::span<const QueryGroup> groups() const { return groups_; }

  /// Called with each batch and its aggregation graph before the forward
  /// pass.
  std::function<void(std::span<const QueryGroup>, const AggregationGraph&)> on_batch;

 private:
  SeGnnModel<T>& model_;
  const TripleStore& store_;
  TrainConfig config_;
  std::vector<QueryGroup> groups_;
  std::mt19937_64 rng_;
  AdamState<T> adam_;
  AdamOptions adam_options_;
  std::size_t epoch_ = 0;
  std::size_t batch_index_ = 0;
};

struct FitOptions {
  /// Checkpoint directory rewritten on every improvement; empty disables.
  std::filesystem::path out_dir;
  /// Receives the CSV log epoch,loss,valid_mrr,elapsed_s.
  std::ostream* log = nullptr;
  /// Human-readable progress lines.
  std::ostream* progress = nullptr;
};

struct FitResult {
  std::size_t best_epoch = 0;
  double best_valid_mrr = 0;
  std::size_t epochs_run = 0;
  std::size_t evaluations = 0;
  std::vector<double> epoch_losses;
};

/// Early-stopped training: valid MRR every eval_every epochs (and after the
/// last epoch), stopping once `patience` evaluations in a row fail to
/// improve. The model is left holding the best parameters.
template <typename T>
FitResult fit(SeGnnModel<T>& model, const TripleStore& store, const TrainConfig& config,
              const FitOptions& options = {});

}  // namespace sekge
