#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "sekge/autodiff.hpp"

namespace sekge {

struct DecoderConfig {
  std::size_t num_entities = 0;
  std::size_t dim = 200;
  std::size_t reshape_rows = 10;  ///< d1
  std::size_t reshape_cols = 20;  ///< d2, d1 * d2 == dim
  std::size_t channels = 32;
  std::size_t kernel = 3;
  double input_dropout = 0.2;
  double feature_dropout = 0.2;
  double hidden_dropout = 0.3;
  double bn_momentum = 0.1;
};

/// Convolutional query encoder with dot-product scoring against an entity
/// table. Head and relation vectors are reshaped to d1 x d2 maps and stacked
/// vertically (head on top) into one 2*d1 x d2 input channel.
template <typename T>
class ConvEDecoder {
 public:
  ConvEDecoder(const DecoderConfig& config, std::mt19937_64& rng);

  const DecoderConfig& config() const { return config_; }

  /// heads, relations: [B x n] -> q: [B x n].
  Var<T> query_embed(Var<T> heads, Var<T> relations, bool training, std::mt19937_64& rng);
  /// q: [B x n], entities: [|E| x n] -> logits [B x |E|] = q E^T + bias.
  Var<T> score_all(Var<T> queries, Var<T> entities);

  std::vector<Parameter<T>*> parameters();
  /// Batch-norm running statistics, in a fixed order: input, feature, hidden.
  std::vector<BatchNormStats<T>*> norm_stats();

  Parameter<T>& entity_bias() { return entity_bias_; }

 private:
  std::size_t padding() const { return (config_.kernel - 1) / 2; }

  DecoderConfig config_;
  Parameter<T> bn0_gamma_, bn0_beta_;
  Parameter<T> conv_w_, conv_b_;
  Parameter<T> bn1_gamma_, bn1_beta_;
  Parameter<T> fc_w_, fc_b_;
  Parameter<T> bn2_gamma_, bn2_beta_;
  Parameter<T> entity_bias_;
  BatchNormStats<T> bn0_, bn1_, bn2_;
};

}  // namespace sekge
