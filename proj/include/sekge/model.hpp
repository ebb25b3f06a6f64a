#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sekge/config.hpp"
#include "sekge/decoder.hpp"
#include "sekge/se_gnn.hpp"

namespace sekge {

EncoderConfig encoder_config(const TrainConfig& config, std::size_t num_entities,
                             std::size_t num_relations);
DecoderConfig decoder_config(const TrainConfig& config, std::size_t num_entities);

/// SE-GNN encoder feeding the convolutional decoder.
template <typename T>
class SeGnnModel {
 public:
  /// Parameters are initialised from a generator seeded with config.seed.
  SeGnnModel(const TrainConfig& config, std::size_t num_entities, std::size_t num_relations);

  SeGnnEncoder<T>& encoder() { return encoder_; }
  ConvEDecoder<T>& decoder() { return decoder_; }

  /// Logits [B x |E|] for the queries (heads[i], relations[i]).
  Var<T> forward(Tape<T>& tape, const AggregationGraph& graph, const IndexList& heads,
                 const IndexList& relations, bool training, std::mt19937_64& rng);

  /// Scores queries against an already encoded graph.
  Var<T> score(const typename SeGnnEncoder<T>::Output& encoded, const IndexList& heads,
               const IndexList& relations, bool training, std::mt19937_64& rng);

  std::vector<Parameter<T>*> parameters();
  /// Every persistent tensor by name: parameters and batch-norm running
  /// statistics.
  std::vector<std::pair<std::string, Tensor<T>*>> state();

 private:
  SeGnnModel(const TrainConfig& config, std::size_t num_entities, std::size_t num_relations,
             std::mt19937_64 rng);

  SeGnnEncoder<T> encoder_;
  ConvEDecoder<T> decoder_;
};

}  // namespace sekge
