#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sekge/tensor.hpp"

namespace sekge {

/// A learnable tensor with its accumulated gradient.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad() { grad = Tensor<T>(value.shape()); }
};

template <typename T>
class Tape;

/// Handle to a value recorded on a tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const { return tape_->requires_grad(id_); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Ordered record of primitive evaluations. Replaying the record backwards
/// pushes output gradients to every node that requires one; parameter leaves
/// receive theirs in Parameter::grad.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  /// With gradients disabled, parameters enter as constants and no backward
  /// rules are kept (evaluation mode).
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  Var<T> param(Parameter<T>& p);

  /// Records an op output. The backward rule is dropped when no parent
  /// requires a gradient.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> parents, BackwardFn backward);
  Var<T> record(Tensor<T> value, std::span<const Var<T>> parents, BackwardFn backward);

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient flowing into node `id`; empty when nothing reached it.
  const Tensor<T>& grad(std::size_t id) const { return nodes_[id].grad; }
  /// Accumulation buffer for node `id`, allocated as zeros on first use.
  Tensor<T>& grad_buffer(std::size_t id);

  /// Seeds d(loss)/d(loss) = 1, replays in reverse, accumulates parameter
  /// gradients and clears the tape. `loss` must hold exactly one element.
  void backward(Var<T> loss);
  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }
  bool grad_enabled() const { return grad_enabled_; }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
  };
  std::vector<Node> nodes_;
  bool grad_enabled_;
};

using IndexList = std::vector<std::int32_t>;

// ---------------------------------------------------------------------------
// Primitives. Each returns the forward value and records its backward rule.

/// [m x k] * [k x n].
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);
/// [m x k] * [n x k]^T.
template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b);
template <typename T>
Var<T> add(Var<T> a, Var<T> b);
/// Adds a length-n vector to every row of an [m x n] matrix.
template <typename T>
Var<T> add_bias(Var<T> a, Var<T> bias);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> a, T factor);
template <typename T>
Var<T> sum(Var<T> a);
/// Concatenation along `axis`; all other extents must agree.
template <typename T>
Var<T> concat(std::span<const Var<T>> parts, std::size_t axis);
template <typename T>
Var<T> reshape(Var<T> a, Shape shape);

/// out[i] = table[index[i]].
template <typename T>
Var<T> gather_rows(Var<T> table, const IndexList& index);
/// out[index[i]] += src[i], out has `rows` rows.
template <typename T>
Var<T> scatter_add_rows(Var<T> src, const IndexList& index, std::size_t rows);
/// out[i] = <a[i], b[i]>.
template <typename T>
Var<T> row_dot(Var<T> a, Var<T> b);
/// out[i, :] = a[i, :] * w[i].
template <typename T>
Var<T> scale_rows(Var<T> a, Var<T> w);

/// Softmax over the scalars sharing a segment id, with max subtraction.
template <typename T>
Var<T> segment_softmax(Var<T> scores, const IndexList& segment, std::size_t num_segments);
/// Softmax over all elements.
template <typename T>
Var<T> softmax(Var<T> scores);

template <typename T>
Var<T> sigmoid(Var<T> a);
template <typename T>
Var<T> tanh(Var<T> a);
template <typename T>
Var<T> relu(Var<T> a);

/// x [N, Cin, H, W], weight [Cout, Cin, k, k], bias [Cout]; stride 1, zero
/// padding `pad` on every side.
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, Var<T> bias, std::size_t pad);

template <typename T>
struct BatchNormStats {
  Tensor<T> running_mean;
  Tensor<T> running_var;

  explicit BatchNormStats(std::size_t channels = 0)
      : running_mean({channels}, T{0}), running_var({channels}, T{1}) {}
};

/// Per-channel normalization over axis 1 of x [N, C, ...]. Training mode uses
/// batch statistics and updates the running ones with `momentum`.
template <typename T>
Var<T> batch_norm(Var<T> x, Var<T> gamma, Var<T> beta, BatchNormStats<T>& stats, bool training,
                  T momentum = T(0.1), T eps = T(1e-5));

/// Inverted dropout: kept groups are scaled by 1/(1-p). Elements are dropped
/// in contiguous groups of `group` (1 = elementwise; a feature-map size drops
/// whole channels). Identity when !training or p == 0.
template <typename T>
Var<T> dropout(Var<T> x, T p, std::mt19937_64& rng, bool training, std::size_t group = 1);

/// Mean over all elements of -[y log s(x) + (1-y) log(1-s(x))], from logits.
template <typename T>
Var<T> bce_with_logits(Var<T> logits, const Tensor<T>& targets);

}  // namespace sekge
