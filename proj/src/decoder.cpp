#include "sekge/decoder.hpp"

#include <array>
#include <cmath>

#include "sekge/error.hpp"
#include "sekge/se_gnn.hpp"

namespace sekge {

namespace {

template <typename T>
Tensor<T> uniform_fan(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<T> out(std::move(shape));
  for (auto& v : out.values()) v = static_cast<T>(dist(rng));
  return out;
}

}  // namespace

template <typename T>
ConvEDecoder<T>::ConvEDecoder(const DecoderConfig& config, std::mt19937_64& rng)
    : config_(config),
      bn0_(1),
      bn1_(config.channels),
      bn2_(config.dim) {
  if (config.reshape_rows * config.reshape_cols != config.dim) {
    throw UsageError("decoder reshape " + std::to_string(config.reshape_rows) + "x" +
                     std::to_string(config.reshape_cols) + " does not match n = " +
                     std::to_string(config.dim));
  }
  if (config.channels == 0 || config.kernel == 0 || config.kernel % 2 == 0) {
    throw UsageError("decoder needs channels > 0 and an odd kernel size");
  }
  if (config.num_entities == 0) throw UsageError("decoder needs a non-empty entity set");
  const std::size_t n = config.dim, C = config.channels, k = config.kernel;
  const std::size_t flat = C * 2 * config.reshape_rows * config.reshape_cols;

  bn0_gamma_ = Parameter<T>("decoder.bn0.gamma", Tensor<T>({1}, T(1)));
  bn0_beta_ = Parameter<T>("decoder.bn0.beta", Tensor<T>({1}));
  conv_w_ = Parameter<T>("decoder.conv.weight", uniform_fan<T>({C, 1, k, k}, k * k, C * k * k, rng));
  conv_b_ = Parameter<T>("decoder.conv.bias", Tensor<T>({C}));
  bn1_gamma_ = Parameter<T>("decoder.bn1.gamma", Tensor<T>({C}, T(1)));
  bn1_beta_ = Parameter<T>("decoder.bn1.beta", Tensor<T>({C}));
  fc_w_ = Parameter<T>("decoder.fc.weight", xavier_uniform<T>({n, flat}, rng));
  fc_b_ = Parameter<T>("decoder.fc.bias", Tensor<T>({n}));
  bn2_gamma_ = Parameter<T>("decoder.bn2.gamma", Tensor<T>({n}, T(1)));
  bn2_beta_ = Parameter<T>("decoder.bn2.beta", Tensor<T>({n}));
  entity_bias_ = Parameter<T>("decoder.entity_bias", Tensor<T>({config.num_entities}));
}

template <typename T>
std::vector<Parameter<T>*> ConvEDecoder<T>::parameters() {
  return {&bn0_gamma_, &bn0_beta_, &conv_w_, &conv_b_, &bn1_gamma_, &bn1_beta_,
          &fc_w_,      &fc_b_,     &bn2_gamma_, &bn2_beta_, &entity_bias_};
}

template <typename T>
std::vector<BatchNormStats<T>*> ConvEDecoder<T>::norm_stats() {
  return {&bn0_, &bn1_, &bn2_};
}

template <typename T>
Var<T> ConvEDecoder<T>::query_embed(Var<T> heads, Var<T> relations, bool training,
                                    std::mt19937_64& rng) {
  const std::size_t n = config_.dim;
  if (heads.value().rank() != 2 || heads.shape()[1] != n || heads.shape() != relations.shape()) {
    throw ShapeError("query_embed expects two [B x " + std::to_string(n) + "] inputs, got " +
                     shape_string(heads.shape()) + " and " + shape_string(relations.shape()));
  }
  auto& tape = heads.tape();
  const std::size_t B = heads.shape()[0];
  const std::size_t d1 = config_.reshape_rows, d2 = config_.reshape_cols;
  const auto momentum = static_cast<T>(config_.bn_momentum);

  const std::array<Var<T>, 2> maps{reshape(heads, {B, 1, d1, d2}), reshape(relations, {B, 1, d1, d2})};
  auto x = concat<T>(maps, 2);
  x = batch_norm(x, tape.param(bn0_gamma_), tape.param(bn0_beta_), bn0_, training, momentum);
  x = dropout(x, static_cast<T>(config_.input_dropout), rng, training);
  x = conv2d(x, tape.param(conv_w_), tape.param(conv_b_), padding());
  x = batch_norm(x, tape.param(bn1_gamma_), tape.param(bn1_beta_), bn1_, training, momentum);
  x = relu(x);
  x = dropout(x, static_cast<T>(config_.feature_dropout), rng, training, 2 * d1 * d2);
  x = reshape(x, {B, config_.channels * 2 * d1 * d2});
  x = add_bias(matmul_nt(x, tape.param(fc_w_)), tape.param(fc_b_));
  x = dropout(x, static_cast<T>(config_.hidden_dropout), rng, training);
  x = batch_norm(x, tape.param(bn2_gamma_), tape.param(bn2_beta_), bn2_, training, momentum);
  return relu(x);
}

template <typename T>
Var<T> ConvEDecoder<T>::score_all(Var<T> queries, Var<T> entities) {
  return add_bias(matmul_nt(queries, entities), queries.tape().param(entity_bias_));
}

template class ConvEDecoder<float>;
template class ConvEDecoder<double>;

}  // namespace sekge
