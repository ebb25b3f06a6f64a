#include "sekge/model.hpp"

namespace sekge {

EncoderConfig encoder_config(const TrainConfig& config, std::size_t num_entities,
                             std::size_t num_relations) {
  EncoderConfig c;
  c.num_entities = num_entities;
  c.num_relations = num_relations;
  c.dim = config.n;
  c.layers = config.layers;
  c.composition = config.composition;
  c.activation = config.activation;
  c.message_dropout = config.message_dropout;
  return c;
}

DecoderConfig decoder_config(const TrainConfig& config, std::size_t num_entities) {
  DecoderConfig c;
  c.num_entities = num_entities;
  c.dim = config.n;
  c.reshape_rows = config.reshape_rows;
  c.reshape_cols = config.reshape_cols;
  c.channels = config.channels;
  c.kernel = config.kernel;
  c.input_dropout = config.input_dropout;
  c.feature_dropout = config.feature_dropout;
  c.hidden_dropout = config.hidden_dropout;
  c.bn_momentum = config.bn_momentum;
  return c;
}

// Both members draw from one generator in declaration order.
template <typename T>
SeGnnModel<T>::SeGnnModel(const TrainConfig& config, std::size_t num_entities,
                          std::size_t num_relations)
    : SeGnnModel(config, num_entities, num_relations, std::mt19937_64(config.seed)) {}

template <typename T>
SeGnnModel<T>::SeGnnModel(const TrainConfig& config, std::size_t num_entities,
                          std::size_t num_relations, std::mt19937_64 rng)
    : encoder_(encoder_config(config, num_entities, num_relations), rng),
      decoder_(decoder_config(config, num_entities), rng) {}

template <typename T>
Var<T> SeGnnModel<T>::score(const typename SeGnnEncoder<T>::Output& encoded,
                            const IndexList& heads, const IndexList& relations, bool training,
                            std::mt19937_64& rng) {
  auto h = gather_rows(encoded.entities, heads);
  auto r = gather_rows(encoded.relations, relations);
  auto q = decoder_.query_embed(h, r, training, rng);
  return decoder_.score_all(q, encoded.entities);
}

template <typename T>
Var<T> SeGnnModel<T>::forward(Tape<T>& tape, const AggregationGraph& graph,
                              const IndexList& heads, const IndexList& relations, bool training,
                              std::mt19937_64& rng) {
  const auto encoded = encoder_.encode(tape, graph, training, rng);
  return score(encoded, heads, relations, training, rng);
}

template <typename T>
std::vector<Parameter<T>*> SeGnnModel<T>::parameters() {
  auto out = encoder_.parameters();
  for (auto* p : decoder_.parameters()) out.push_back(p);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> SeGnnModel<T>::state() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  for (auto* p : parameters()) out.emplace_back(p->name, &p->value);
  const auto stats = decoder_.norm_stats();
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const auto prefix = "decoder.bn" + std::to_string(i) + ".running_";
    out.emplace_back(prefix + "mean", &stats[i]->running_mean);
    out.emplace_back(prefix + "var", &stats[i]->running_var);
  }
  return out;
}

template class SeGnnModel<float>;
template class SeGnnModel<double>;

}  // namespace sekge
