#include "sekge/se_gnn.hpp"

#include <cmath>
#include <string>

#include "sekge/error.hpp"

namespace sekge {

std::string_view branch_name(Branch b) {
  switch (b) {
    case Branch::rel: return "rel";
    case Branch::ent: return "ent";
    case Branch::tri: return "tri";
  }
  return "?";
}

Branch parse_branch(std::string_view name) {
  if (name == "rel") return Branch::rel;
  if (name == "ent") return Branch::ent;
  if (name == "tri") return Branch::tri;
  throw UsageError("unknown aggregation branch '" + std::string(name) + "'");
}

Composition parse_composition(std::string_view name) {
  if (name == "add") return Composition::add;
  if (name == "mul") return Composition::mul;
  if (name == "mlp") return Composition::mlp;
  throw UsageError("unknown composition '" + std::string(name) + "' (expected add, mul or mlp)");
}

std::string_view composition_name(Composition c) {
  switch (c) {
    case Composition::add: return "add";
    case Composition::mul: return "mul";
    case Composition::mlp: return "mlp";
  }
  return "?";
}

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  throw UsageError("unknown activation '" + std::string(name) + "' (expected tanh or relu)");
}

std::string_view activation_name(Activation a) {
  return a == Activation::tanh ? "tanh" : "relu";
}

AggregationGraph AggregationGraph::from_edges(std::span<const Triple> edges) {
  AggregationGraph g;
  g.src.reserve(edges.size());
  g.rel.reserve(edges.size());
  g.dst.reserve(edges.size());
  for (const auto& e : edges) {
    g.src.push_back(e.head);
    g.rel.push_back(e.relation);
    g.dst.push_back(e.tail);
  }
  return g;
}

template <typename T>
Tensor<T> xavier_uniform(Shape shape, std::mt19937_64& rng) {
  if (shape.size() != 2) throw ShapeError("xavier_uniform expects a matrix shape");
  const double bound = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<T> out(std::move(shape));
  for (auto& v : out.values()) v = static_cast<T>(dist(rng));
  return out;
}

template <typename T>
SeGnnEncoder<T>::SeGnnEncoder(const EncoderConfig& config, std::mt19937_64& rng)
    : config_(config) {
  if (config.dim == 0 || config.layers == 0) {
    throw UsageError("encoder needs n > 0 and K >= 1");
  }
  if (config.num_entities == 0 || config.num_relations == 0) {
    throw UsageError("encoder needs a non-empty vocabulary");
  }
  const std::size_t n = config.dim;
  entity_emb_ = Parameter<T>("encoder.entity_emb",
                             xavier_uniform<T>({config.num_entities, n}, rng));
  for (std::size_t l = 0; l < config.layers; ++l) {
    const auto prefix = "encoder.layer" + std::to_string(l) + ".";
    relation_emb_.emplace_back(prefix + "relation_emb",
                               xavier_uniform<T>({config.num_relations, n}, rng));
    std::array<Parameter<T>, 3> ws;
    for (Branch b : {Branch::rel, Branch::ent, Branch::tri}) {
      ws[static_cast<int>(b)] = Parameter<T>(prefix + "w_" + std::string(branch_name(b)),
                                             xavier_uniform<T>({n, n}, rng));
    }
    branch_w_.push_back(std::move(ws));
    if (config.composition == Composition::mlp) {
      mlp_w_.emplace_back(prefix + "w_compose", xavier_uniform<T>({n, 2 * n}, rng));
    }
  }
  out_w_ = Parameter<T>("encoder.w_out", xavier_uniform<T>({n, config.layers * n}, rng));
}

template <typename T>
std::vector<Parameter<T>*> SeGnnEncoder<T>::parameters() {
  std::vector<Parameter<T>*> out{&entity_emb_};
  for (std::size_t l = 0; l < config_.layers; ++l) {
    out.push_back(&relation_emb_[l]);
    for (auto& w : branch_w_[l]) out.push_back(&w);
    if (!mlp_w_.empty()) out.push_back(&mlp_w_[l]);
  }
  out.push_back(&out_w_);
  return out;
}

template <typename T>
Var<T> SeGnnEncoder<T>::compose(std::size_t layer, Var<T> e, Var<T> r) {
  switch (config_.composition) {
    case Composition::add: return add(e, r);
    case Composition::mul: return mul(e, r);
    case Composition::mlp: {
      const std::array<Var<T>, 2> parts{e, r};
      auto joined = concat<T>(parts, 1);
      return tanh(matmul_nt(joined, e.tape().param(mlp_w_.at(layer))));
    }
  }
  throw UsageError("unknown composition");
}

template <typename T>
Var<T> SeGnnEncoder<T>::aggregate_branch(Branch branch, std::size_t layer, Var<T> entities,
                                         Var<T> relations, const AggregationGraph& graph,
                                         bool training, std::mt19937_64& rng,
                                         std::vector<double>* alpha_out) {
  auto& tape = entities.tape();
  const std::size_t n_ent = config_.num_entities;
  Var<T> message;
  switch (branch) {
    case Branch::rel: message = gather_rows(relations, graph.rel); break;
    case Branch::ent: message = gather_rows(entities, graph.src); break;
    case Branch::tri:
      message = compose(layer, gather_rows(entities, graph.src), gather_rows(relations, graph.rel));
      break;
    default: throw UsageError("unknown aggregation branch");
  }
  auto center = gather_rows(entities, graph.dst);
  auto alpha = segment_softmax(row_dot(message, center), graph.dst, n_ent);
  if (alpha_out != nullptr) {
    const auto& a = alpha.value();
    alpha_out->assign(a.values().begin(), a.values().end());
  }
  auto pooled = scatter_add_rows(scale_rows(message, alpha), graph.dst, n_ent);
  auto projected = matmul_nt(pooled, tape.param(branch_weight(layer, branch)));
  auto activated =
      config_.activation == Activation::tanh ? tanh(projected) : relu(projected);
  return dropout(activated, static_cast<T>(config_.message_dropout), rng, training);
}

template <typename T>
Var<T> SeGnnEncoder<T>::layer_forward(std::size_t layer, Var<T> entities, Var<T> relations,
                                      const AggregationGraph& graph, bool training,
                                      std::mt19937_64& rng, AttentionTrace* trace) {
  Var<T> next = entities;
  for (Branch b : {Branch::rel, Branch::ent, Branch::tri}) {
    std::vector<double>* alpha = nullptr;
    if (trace != nullptr) {
      if (trace->alpha.size() <= layer) trace->alpha.resize(layer + 1);
      alpha = &trace->alpha[layer][static_cast<int>(b)];
    }
    next = add(next, aggregate_branch(b, layer, entities, relations, graph, training, rng, alpha));
  }
  return next;
}

template <typename T>
typename SeGnnEncoder<T>::Output SeGnnEncoder<T>::encode(Tape<T>& tape,
                                                         const AggregationGraph& graph,
                                                         bool training, std::mt19937_64& rng,
                                                         AttentionTrace* trace) {
  Var<T> e = tape.param(entity_emb_);
  std::vector<Var<T>> layer_relations;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    Var<T> r = tape.param(relation_emb_[l]);
    e = layer_forward(l, e, r, graph, training, rng, trace);
    layer_relations.push_back(r);
  }
  auto stacked = concat<T>(layer_relations, 1);
  return {e, matmul_nt(stacked, tape.param(out_w_))};
}

template class SeGnnEncoder<float>;
template class SeGnnEncoder<double>;
template Tensor<float> xavier_uniform<float>(Shape, std::mt19937_64&);
template Tensor<double> xavier_uniform<double>(Shape, std::mt19937_64&);

}  // namespace sekge
