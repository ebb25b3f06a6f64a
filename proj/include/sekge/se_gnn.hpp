#pragma once

#include <array>
#include <cstddef>
#include <random>
#include <string_view>
#include <vector>

#include "sekge/autodiff.hpp"
#include "sekge/kg_core.hpp"

namespace sekge {

enum class Branch { rel = 0, ent = 1, tri = 2 };
enum class Composition { add, mul, mlp };
enum class Activation { tanh, relu };

std::string_view branch_name(Branch b);
Branch parse_branch(std::string_view name);
Composition parse_composition(std::string_view name);
std::string_view composition_name(Composition c);
Activation parse_activation(std::string_view name);
std::string_view activation_name(Activation a);

/// Directed aggregation edges: entity dst[i] receives a message from
/// (src[i], rel[i]). Neighborhood of e_i is {(src, rel) : dst == i}.
struct AggregationGraph {
  IndexList src;
  IndexList rel;
  IndexList dst;

  std::size_t size() const { return dst.size(); }
  static AggregationGraph from_edges(std::span<const Triple> edges);
};

struct EncoderConfig {
  std::size_t num_entities = 0;
  std::size_t num_relations = 0;  ///< including inverses
  std::size_t dim = 200;
  std::size_t layers = 2;
  Composition composition = Composition::mul;
  Activation activation = Activation::tanh;
  double message_dropout = 0.1;
};

/// Attention weights recorded during a forward pass, indexed
/// [layer][branch][edge].
struct AttentionTrace {
  std::vector<std::array<std::vector<double>, 3>> alpha;
};

template <typename T>
class SeGnnEncoder {
 public:
  /// Xavier-uniform initialisation of every table and matrix from `rng`.
  SeGnnEncoder(const EncoderConfig& config, std::mt19937_64& rng);

  const EncoderConfig& config() const { return config_; }

  struct Output {
    Var<T> entities;   ///< |E| x n
    Var<T> relations;  ///< 2|R| x n
  };

  /// K aggregation layers followed by the relation output transform.
  Output encode(Tape<T>& tape, const AggregationGraph& graph, bool training,
                std::mt19937_64& rng, AttentionTrace* trace = nullptr);

  /// e^{l+1} = e^l + s_rel + s_ent + s_tri for layer `layer`.
  Var<T> layer_forward(std::size_t layer, Var<T> entities, Var<T> relations,
                       const AggregationGraph& graph, bool training, std::mt19937_64& rng,
                       AttentionTrace* trace = nullptr);

  /// sigma(sum_j alpha_ij W phi_b(e_j, r_j)) per entity; zero for entities
  /// without incoming edges.
  Var<T> aggregate_branch(Branch branch, std::size_t layer, Var<T> entities, Var<T> relations,
                          const AggregationGraph& graph, bool training, std::mt19937_64& rng,
                          std::vector<double>* alpha_out = nullptr);

  /// Message phi(e, r) of the triple branch, row-wise.
  Var<T> compose(std::size_t layer, Var<T> e, Var<T> r);

  Parameter<T>& entity_embedding() { return entity_emb_; }
  Parameter<T>& relation_embedding(std::size_t layer) { return relation_emb_.at(layer); }
  Parameter<T>& branch_weight(std::size_t layer, Branch b) {
    return branch_w_.at(layer)[static_cast<int>(b)];
  }
  Parameter<T>& output_weight() { return out_w_; }

  std::vector<Parameter<T>*> parameters();

 private:
  EncoderConfig config_;
  Parameter<T> entity_emb_;
  std::vector<Parameter<T>> relation_emb_;
  std::vector<std::array<Parameter<T>, 3>> branch_w_;  ///< n x n, applied as W x
  std::vector<Parameter<T>> mlp_w_;                    ///< n x 2n when composition == mlp
  Parameter<T> out_w_;                                 ///< n x (K n)
};

/// Xavier-uniform matrix with fan_in = cols, fan_out = rows.
template <typename T>
Tensor<T> xavier_uniform(Shape shape, std::mt19937_64& rng);

}  // namespace sekge
