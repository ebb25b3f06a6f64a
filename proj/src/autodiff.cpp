#include "sekge/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "sekge/error.hpp"

namespace sekge {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

std::string pair_shapes(const Shape& a, const Shape& b) {
  return shape_string(a) + " vs " + shape_string(b);
}

template <typename T>
void check_same_tape(const Var<T>& a, const Var<T>& b) {
  require(&a.tape() == &b.tape(), "operands recorded on different tapes");
}

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  T* d = dst.data();
  const T* s = src.data();
  for (std::size_t i = 0; i < src.size(); ++i) d[i] += s[i];
}

template <typename T>
Var<T> unary(Var<T> a, T (*f)(T), T (*df)(T x, T y)) {
  Tensor<T> out(a.shape());
  const auto& x = a.value();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, df](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& x = t.value(ia);
    const auto& y = t.value(self);
    auto& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(x[i], y[i]);
  });
}

template <typename T>
T sigmoid_scalar(T x) {
  if (x >= 0) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// Tape

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::param(Parameter<T>& p) {
  Node node;
  node.value = p.value;
  if (grad_enabled_) {
    node.requires_grad = true;
    node.param = &p;
  }
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::initializer_list<Var<T>> parents,
                       BackwardFn backward) {
  return record(std::move(value), std::span<const Var<T>>(parents.begin(), parents.size()),
                std::move(backward));
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::span<const Var<T>> parents, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  for (const auto& p : parents) {
    require(&p.tape() == this, "operand recorded on a different tape");
    node.requires_grad = node.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(std::size_t id) {
  auto& node = nodes_[id];
  if (node.grad.size() != node.value.size()) node.grad = Tensor<T>(node.value.shape());
  return node.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  require(&loss.tape() == this, "loss recorded on a different tape");
  if (loss.value().size() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  grad_buffer(loss.id())[0] = T(1);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (!node.requires_grad || node.grad.empty()) continue;
    if (node.backward) node.backward(*this, i);
    if (node.param != nullptr) {
      if (node.param->grad.shape() != node.value.shape()) node.param->zero_grad();
      accumulate(node.param->grad, node.grad);
    }
  }
  nodes_.clear();
}

// ---------------------------------------------------------------------------
// Linear algebra

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  check_same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  require(av.rank() == 2 && bv.rank() == 2 && av.dim(1) == bv.dim(0),
          "matmul shape mismatch: " + pair_shapes(av.shape(), bv.shape()));
  const auto m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor<T> out({m, n});
  MatMap<T>(out.data(), m, n).noalias() =
      ConstMatMap<T>(av.data(), m, k) * ConstMatMap<T>(bv.data(), k, n);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [=](Tape<T>& t, std::size_t self) {
    ConstMatMap<T> g(t.grad(self).data(), m, n);
    if (t.requires_grad(ia)) {
      MatMap<T>(t.grad_buffer(ia).data(), m, k).noalias() +=
          g * ConstMatMap<T>(t.value(ib).data(), k, n).transpose();
    }
    if (t.requires_grad(ib)) {
      MatMap<T>(t.grad_buffer(ib).data(), k, n).noalias() +=
          ConstMatMap<T>(t.value(ia).data(), m, k).transpose() * g;
    }
  });
}

template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  check_same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  require(av.rank() == 2 && bv.rank() == 2 && av.dim(1) == bv.dim(1),
          "matmul_nt shape mismatch: " + pair_shapes(av.shape(), bv.shape()));
  const auto m = av.dim(0), k = av.dim(1), n = bv.dim(0);
  Tensor<T> out({m, n});
  MatMap<T>(out.data(), m, n).noalias() =
      ConstMatMap<T>(av.data(), m, k) * ConstMatMap<T>(bv.data(), n, k).transpose();
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [=](Tape<T>& t, std::size_t self) {
    ConstMatMap<T> g(t.grad(self).data(), m, n);
    if (t.requires_grad(ia)) {
      MatMap<T>(t.grad_buffer(ia).data(), m, k).noalias() +=
          g * ConstMatMap<T>(t.value(ib).data(), n, k);
    }
    if (t.requires_grad(ib)) {
      MatMap<T>(t.grad_buffer(ib).data(), n, k).noalias() +=
          g.transpose() * ConstMatMap<T>(t.value(ia).data(), m, k);
    }
  });
}

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  check_same_tape(a, b);
  require(a.shape() == b.shape(), "add shape mismatch: " + pair_shapes(a.shape(), b.shape()));
  Tensor<T> out = a.value();
  accumulate(out, b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [=](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) accumulate(t.grad_buffer(ia), g);
    if (t.requires_grad(ib)) accumulate(t.grad_buffer(ib), g);
  });
}

template <typename T>
Var<T> add_bias(Var<T> a, Var<T> bias) {
  check_same_tape(a, bias);
  require(a.value().rank() == 2 && bias.value().rank() == 1 && bias.shape()[0] == a.shape()[1],
          "add_bias shape mismatch: " + pair_shapes(a.shape(), bias.shape()));
  const auto m = a.shape()[0], n = a.shape()[1];
  Tensor<T> out = a.value();
  const auto& bv = bias.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  const std::size_t ia = a.id(), ib = bias.id();
  return a.tape().record(std::move(out), {a, bias}, [=](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) accumulate(t.grad_buffer(ia), g);
    if (t.requires_grad(ib)) {
      auto& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  check_same_tape(a, b);
  require(a.shape() == b.shape(), "mul shape mismatch: " + pair_shapes(a.shape(), b.shape()));
  Tensor<T> out(a.shape());
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [=](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) {
      auto& ga = t.grad_buffer(ia);
      const auto& bv = t.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(ib)) {
      auto& gb = t.grad_buffer(ib);
      const auto& av = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v *= factor;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [=](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

template <typename T>
Var<T> sum(Var<T> a) {
  T total = 0;
  for (T v : a.value().values()) total += v;
  const std::size_t ia = a.id();
  return a.tape().record(Tensor<T>({1}, total), {a}, [=](Tape<T>& t, std::size_t self) {
    const T g = t.grad(self)[0];
    for (auto& v : t.grad_buffer(ia).values()) v += g;
  });
}

template <typename T>
Var<T> concat(std::span<const Var<T>> parts, std::size_t axis) {
  require(!parts.empty(), "concat of zero tensors");
  const Shape& first = parts[0].shape();
  require(axis < first.size(), "concat axis out of range for shape " + shape_string(first));
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    check_same_tape(parts[0], p);
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    require(ok, "concat shape mismatch: " + pair_shapes(first, s));
    widths.push_back(s[axis] * inner);
    total += s[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total;
  Tensor<T> out(out_shape);
  const std::size_t row = total * inner;
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& v = parts[p].value();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v.data() + o * widths[p], widths[p], out.data() + o * row + offset);
    }
    offset += widths[p];
  }
  std::vector<std::size_t> ids;
  for (const auto& p : parts) ids.push_back(p.id());
  return parts[0].tape().record(
      std::move(out), parts, [=](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad(self);
        std::size_t off = 0;
        for (std::size_t p = 0; p < ids.size(); ++p) {
          if (t.requires_grad(ids[p])) {
            auto& gp = t.grad_buffer(ids[p]);
            for (std::size_t o = 0; o < outer; ++o) {
              const T* src = g.data() + o * row + off;
              T* dst = gp.data() + o * widths[p];
              for (std::size_t i = 0; i < widths[p]; ++i) dst[i] += src[i];
            }
          }
          off += widths[p];
        }
      });
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  Tensor<T> out = a.value();
  out.reshape(std::move(shape));
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [=](Tape<T>& t, std::size_t self) {
    accumulate(t.grad_buffer(ia), t.grad(self));
  });
}

// ---------------------------------------------------------------------------
// Indexing

template <typename T>
Var<T> gather_rows(Var<T> table, const IndexList& index) {
  const auto& tv = table.value();
  require(tv.rank() == 2, "gather_rows needs a matrix, got " + shape_string(tv.shape()));
  const std::size_t rows = tv.dim(0), n = tv.dim(1);
  Tensor<T> out({index.size(), n});
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto r = index[i];
    require(r >= 0 && static_cast<std::size_t>(r) < rows,
            "gather_rows index " + std::to_string(r) + " out of range for " +
                shape_string(tv.shape()));
    std::copy_n(tv.data() + r * n, n, out.data() + i * n);
  }
  const std::size_t it = table.id();
  return table.tape().record(std::move(out), {table}, [=](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gt = t.grad_buffer(it);
    for (std::size_t i = 0; i < index.size(); ++i) {
      T* dst = gt.data() + index[i] * n;
      const T* src = g.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
    }
  });
}

template <typename T>
Var<T> scatter_add_rows(Var<T> src, const IndexList& index, std::size_t rows) {
  const auto& sv = src.value();
  require(sv.rank() == 2 && sv.dim(0) == index.size(),
          "scatter_add_rows: source " + shape_string(sv.shape()) + " vs " +
              std::to_string(index.size()) + " indices");
  const std::size_t n = sv.dim(1);
  Tensor<T> out({rows, n});
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto r = index[i];
    require(r >= 0 && static_cast<std::size_t>(r) < rows,
            "scatter_add_rows index " + std::to_string(r) + " out of range");
    T* dst = out.data() + r * n;
    const T* s = sv.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) dst[j] += s[j];
  }
  const std::size_t is = src.id();
  return src.tape().record(std::move(out), {src}, [=](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gs = t.grad_buffer(is);
    for (std::size_t i = 0; i < index.size(); ++i) {
      const T* from = g.data() + index[i] * n;
      T* dst = gs.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) dst[j] += from[j];
    }
  });
}

template <typename T>
Var<T> row_dot(Var<T> a, Var<T> b) {
  check_same_tape(a, b);
  require(a.shape() == b.shape() && a.value().rank() == 2,
          "row_dot shape mismatch: " + pair_shapes(a.shape(), b.shape()));
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor<T> out({m});
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < m; ++i) {
    T acc = 0;
    for (std::size_t j = 0; j < n; ++j) acc += av[i * n + j] * bv[i * n + j];
    out[i] = acc;
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [=](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& av = t.value(ia);
    const auto& bv = t.value(ib);
    if (t.requires_grad(ia)) {
      auto& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i] * bv[i * n + j];
    }
    if (t.requires_grad(ib)) {
      auto& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[i * n + j] += g[i] * av[i * n + j];
    }
  });
}

template <typename T>
Var<T> scale_rows(Var<T> a, Var<T> w) {
  check_same_tape(a, w);
  require(a.value().rank() == 2 && w.value().rank() == 1 && w.shape()[0] == a.shape()[0],
          "scale_rows shape mismatch: " + pair_shapes(a.shape(), w.shape()));
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor<T> out(a.shape());
  const auto& av = a.value();
  const auto& wv = w.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] * wv[i];
  const std::size_t ia = a.id(), iw = w.id();
  return a.tape().record(std::move(out), {a, w}, [=](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& av = t.value(ia);
    const auto& wv = t.value(iw);
    if (t.requires_grad(ia)) {
      auto& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i * n + j] * wv[i];
    }
    if (t.requires_grad(iw)) {
      auto& gw = t.grad_buffer(iw);
      for (std::size_t i = 0; i < m; ++i) {
        T acc = 0;
        for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * av[i * n + j];
        gw[i] += acc;
      }
    }
  });
}

template <typename T>
Var<T> segment_softmax(Var<T> scores, const IndexList& segment, std::size_t num_segments) {
  const auto& sv = scores.value();
  require(sv.rank() == 1 && sv.size() == segment.size(),
          "segment_softmax: scores " + shape_string(sv.shape()) + " vs " +
              std::to_string(segment.size()) + " segment ids");
  std::vector<T> seg_max(num_segments, -std::numeric_limits<T>::infinity());
  for (std::size_t i = 0; i < segment.size(); ++i) {
    require(segment[i] >= 0 && static_cast<std::size_t>(segment[i]) < num_segments,
            "segment id out of range");
    seg_max[segment[i]] = std::max(seg_max[segment[i]], sv[i]);
  }
  std::vector<T> seg_sum(num_segments, T(0));
  Tensor<T> out(sv.shape());
  for (std::size_t i = 0; i < segment.size(); ++i) {
    out[i] = std::exp(sv[i] - seg_max[segment[i]]);
    seg_sum[segment[i]] += out[i];
  }
  for (std::size_t i = 0; i < segment.size(); ++i) out[i] /= seg_sum[segment[i]];
  const std::size_t is = scores.id();
  return scores.tape().record(std::move(out), {scores}, [=](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& y = t.value(self);
    std::vector<T> dot(num_segments, T(0));
    for (std::size_t i = 0; i < segment.size(); ++i) dot[segment[i]] += g[i] * y[i];
    auto& gs = t.grad_buffer(is);
    for (std::size_t i = 0; i < segment.size(); ++i) gs[i] += y[i] * (g[i] - dot[segment[i]]);
  });
}

template <typename T>
Var<T> softmax(Var<T> scores) {
  const std::size_t n = scores.value().size();
  return segment_softmax(reshape(scores, Shape{n}), IndexList(n, 0), 1);
}

// ---------------------------------------------------------------------------
// Activations

template <typename T>
Var<T> sigmoid(Var<T> a) {
  return unary<T>(
      a, [](T x) { return sigmoid_scalar(x); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> tanh(Var<T> a) {
  return unary<T>(
      a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> relu(Var<T> a) {
  return unary<T>(
      a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

// ---------------------------------------------------------------------------
// Convolution and normalization

namespace {

/// Unfolds each sample of x [N, C, H, W] into a [C*k*k, Ho*Wo] column block;
/// zero padding shows up as zero entries.
template <typename T>
RowMat<T> im2col(const Tensor<T>& x, std::size_t k, std::size_t pad, std::size_t Ho,
                 std::size_t Wo) {
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), P = Ho * Wo;
  RowMat<T> cols = RowMat<T>::Zero(static_cast<Eigen::Index>(C * k * k),
                                   static_cast<Eigen::Index>(N * P));
  const auto ipad = static_cast<std::ptrdiff_t>(pad);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        T* row = cols.data() + ((c * k + ki) * k + kj) * N * P;
        for (std::size_t n = 0; n < N; ++n) {
          const T* xin = x.data() + ((n * C + c) * H) * W;
          for (std::size_t i = 0; i < Ho; ++i) {
            const auto r = static_cast<std::ptrdiff_t>(i + ki) - ipad;
            if (r < 0 || r >= static_cast<std::ptrdiff_t>(H)) continue;
            for (std::size_t j = 0; j < Wo; ++j) {
              const auto cc = static_cast<std::ptrdiff_t>(j + kj) - ipad;
              if (cc < 0 || cc >= static_cast<std::ptrdiff_t>(W)) continue;
              row[n * P + i * Wo + j] = xin[r * W + cc];
            }
          }
        }
      }
    }
  }
  return cols;
}

}  // namespace

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, Var<T> bias, std::size_t pad) {
  check_same_tape(x, weight);
  check_same_tape(x, bias);
  const auto& xv = x.value();
  const auto& wv = weight.value();
  require(xv.rank() == 4 && wv.rank() == 4 && wv.dim(1) == xv.dim(1) && wv.dim(2) == wv.dim(3),
          "conv2d shape mismatch: " + pair_shapes(xv.shape(), wv.shape()));
  require(bias.value().rank() == 1 && bias.value().dim(0) == wv.dim(0),
          "conv2d bias shape mismatch: " + pair_shapes(bias.shape(), wv.shape()));
  const std::size_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const std::size_t F = wv.dim(0), k = wv.dim(2);
  require(H + 2 * pad >= k && W + 2 * pad >= k, "conv2d kernel larger than padded input");
  const std::size_t Ho = H + 2 * pad - k + 1, Wo = W + 2 * pad - k + 1, P = Ho * Wo;
  const auto F_ = static_cast<Eigen::Index>(F), K_ = static_cast<Eigen::Index>(C * k * k);
  const auto NP = static_cast<Eigen::Index>(N * P);

  auto cols = std::make_shared<RowMat<T>>(im2col(xv, k, pad, Ho, Wo));
  const ConstMatMap<T> wm(wv.data(), F_, K_);
  // [F, N*P] with sample n in columns [n*P, (n+1)*P).
  const RowMat<T> prod = wm * *cols;
  Tensor<T> out({N, F, Ho, Wo});
  const auto& bv = bias.value();
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t f = 0; f < F; ++f) {
      const T* src = prod.data() + f * N * P + n * P;
      T* o = out.data() + (n * F + f) * P;
      for (std::size_t i = 0; i < P; ++i) o[i] = src[i] + bv[f];
    }
  }

  const std::size_t ix = x.id(), iw = weight.id(), ib = bias.id();
  return x.tape().record(std::move(out), {x, weight, bias}, [=](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    // Gradient rearranged to [F, N*P] to match the column layout.
    RowMat<T> gm(F_, NP);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t f = 0; f < F; ++f) {
        std::copy_n(g.data() + (n * F + f) * P, P, gm.data() + f * N * P + n * P);
      }
    }
    if (t.requires_grad(ib)) {
      auto& gb = t.grad_buffer(ib);
      for (std::size_t f = 0; f < F; ++f) gb[f] += gm.row(static_cast<Eigen::Index>(f)).sum();
    }
    if (t.requires_grad(iw)) {
      MatMap<T> gw(t.grad_buffer(iw).data(), F_, K_);
      gw.noalias() += gm * cols->transpose();
    }
    if (t.requires_grad(ix)) {
      const ConstMatMap<T> wm(t.value(iw).data(), F_, K_);
      const RowMat<T> gcols = wm.transpose() * gm;
      T* gx = t.grad_buffer(ix).data();
      const auto ipad = static_cast<std::ptrdiff_t>(pad);
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t ki = 0; ki < k; ++ki) {
          for (std::size_t kj = 0; kj < k; ++kj) {
            const T* row = gcols.data() + ((c * k + ki) * k + kj) * N * P;
            for (std::size_t n = 0; n < N; ++n) {
              T* gin = gx + ((n * C + c) * H) * W;
              for (std::size_t i = 0; i < Ho; ++i) {
                const auto r = static_cast<std::ptrdiff_t>(i + ki) - ipad;
                if (r < 0 || r >= static_cast<std::ptrdiff_t>(H)) continue;
                for (std::size_t j = 0; j < Wo; ++j) {
                  const auto cc = static_cast<std::ptrdiff_t>(j + kj) - ipad;
                  if (cc < 0 || cc >= static_cast<std::ptrdiff_t>(W)) continue;
                  gin[r * W + cc] += row[n * P + i * Wo + j];
                }
              }
            }
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> batch_norm(Var<T> x, Var<T> gamma, Var<T> beta, BatchNormStats<T>& stats, bool training,
                  T momentum, T eps) {
  check_same_tape(x, gamma);
  check_same_tape(x, beta);
  const auto& xv = x.value();
  require(xv.rank() >= 2, "batch_norm needs [N, C, ...], got " + shape_string(xv.shape()));
  const std::size_t N = xv.dim(0), C = xv.dim(1), S = xv.size() / (N * C);
  require(gamma.value().size() == C && beta.value().size() == C &&
              stats.running_mean.size() == C && stats.running_var.size() == C,
          "batch_norm parameter size mismatch for input " + shape_string(xv.shape()));
  const auto m = static_cast<T>(N * S);

  std::vector<T> mean(C, T(0)), inv_std(C, T(0));
  if (training) {
    for (std::size_t c = 0; c < C; ++c) {
      T acc = 0;
      for (std::size_t n = 0; n < N; ++n) {
        const T* p = xv.data() + (n * C + c) * S;
        for (std::size_t s = 0; s < S; ++s) acc += p[s];
      }
      mean[c] = acc / m;
      T var = 0;
      for (std::size_t n = 0; n < N; ++n) {
        const T* p = xv.data() + (n * C + c) * S;
        for (std::size_t s = 0; s < S; ++s) var += (p[s] - mean[c]) * (p[s] - mean[c]);
      }
      const T unbiased = m > T(1) ? var / (m - T(1)) : var;
      var /= m;
      inv_std[c] = T(1) / std::sqrt(var + eps);
      stats.running_mean[c] = (T(1) - momentum) * stats.running_mean[c] + momentum * mean[c];
      stats.running_var[c] = (T(1) - momentum) * stats.running_var[c] + momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = stats.running_mean[c];
      inv_std[c] = T(1) / std::sqrt(stats.running_var[c] + eps);
    }
  }

  Tensor<T> xhat(xv.shape());
  Tensor<T> out(xv.shape());
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t s = 0; s < S; ++s) {
        const std::size_t i = (n * C + c) * S + s;
        xhat[i] = (xv[i] - mean[c]) * inv_std[c];
        out[i] = gv[c] * xhat[i] + bv[c];
      }

  const std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id();
  return x.tape().record(
      std::move(out), {x, gamma, beta},
      [=, xhat = std::move(xhat)](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& gv = t.value(ig);
        std::vector<T> sum_g(C, T(0)), sum_gx(C, T(0));
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t s = 0; s < S; ++s) {
              const std::size_t i = (n * C + c) * S + s;
              sum_g[c] += g[i];
              sum_gx[c] += g[i] * xhat[i];
            }
        if (t.requires_grad(ig)) {
          auto& gg = t.grad_buffer(ig);
          for (std::size_t c = 0; c < C; ++c) gg[c] += sum_gx[c];
        }
        if (t.requires_grad(ib)) {
          auto& gb = t.grad_buffer(ib);
          for (std::size_t c = 0; c < C; ++c) gb[c] += sum_g[c];
        }
        if (t.requires_grad(ix)) {
          auto& gx = t.grad_buffer(ix);
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < C; ++c)
              for (std::size_t s = 0; s < S; ++s) {
                const std::size_t i = (n * C + c) * S + s;
                if (training) {
                  gx[i] += gv[c] * inv_std[c] *
                           (g[i] - sum_g[c] / m - xhat[i] * sum_gx[c] / m);
                } else {
                  gx[i] += gv[c] * inv_std[c] * g[i];
                }
              }
        }
      });
}

template <typename T>
Var<T> dropout(Var<T> x, T p, std::mt19937_64& rng, bool training, std::size_t group) {
  if (!(p >= T(0) && p < T(1))) throw ShapeError("dropout rate must lie in [0, 1)");
  if (!training || p == T(0)) return x;
  require(group > 0 && x.value().size() % group == 0,
          "dropout group size does not divide " + shape_string(x.shape()));
  const std::size_t groups = x.value().size() / group;
  std::vector<T> mask(groups);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const T keep_scale = T(1) / (T(1) - p);
  for (auto& m : mask) m = uniform(rng) >= static_cast<double>(p) ? keep_scale : T(0);
  Tensor<T> out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i / group];
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [=, mask = std::move(mask)](Tape<T>& t,
                                                                         std::size_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i / group];
  });
}

template <typename T>
Var<T> bce_with_logits(Var<T> logits, const Tensor<T>& targets) {
  const auto& lv = logits.value();
  require(lv.shape() == targets.shape(),
          "bce_with_logits shape mismatch: " + pair_shapes(lv.shape(), targets.shape()));
  const auto count = static_cast<T>(lv.size());
  double total = 0;
  for (std::size_t i = 0; i < lv.size(); ++i) {
    const double x = lv[i];
    total += std::max(x, 0.0) - x * targets[i] + std::log1p(std::exp(-std::abs(x)));
  }
  const std::size_t il = logits.id();
  return logits.tape().record(
      Tensor<T>({1}, static_cast<T>(total / count)), {logits}, [=, y = targets](Tape<T>& t, std::size_t self) {
        const T g = t.grad(self)[0] / count;
        const auto& lv = t.value(il);
        auto& gl = t.grad_buffer(il);
        for (std::size_t i = 0; i < lv.size(); ++i) gl[i] += g * (sigmoid_scalar(lv[i]) - y[i]);
      });
}

#define SEKGE_INSTANTIATE(T)                                                               \
  template class Tape<T>;                                                                  \
  template Var<T> matmul<T>(Var<T>, Var<T>);                                               \
  template Var<T> matmul_nt<T>(Var<T>, Var<T>);                                            \
  template Var<T> add<T>(Var<T>, Var<T>);                                                  \
  template Var<T> add_bias<T>(Var<T>, Var<T>);                                             \
  template Var<T> mul<T>(Var<T>, Var<T>);                                                  \
  template Var<T> scale<T>(Var<T>, T);                                                     \
  template Var<T> sum<T>(Var<T>);                                                          \
  template Var<T> concat<T>(std::span<const Var<T>>, std::size_t);                         \
  template Var<T> reshape<T>(Var<T>, Shape);                                               \
  template Var<T> gather_rows<T>(Var<T>, const IndexList&);                                \
  template Var<T> scatter_add_rows<T>(Var<T>, const IndexList&, std::size_t);              \
  template Var<T> row_dot<T>(Var<T>, Var<T>);                                              \
  template Var<T> scale_rows<T>(Var<T>, Var<T>);                                           \
  template Var<T> segment_softmax<T>(Var<T>, const IndexList&, std::size_t);               \
  template Var<T> softmax<T>(Var<T>);                                                      \
  template Var<T> sigmoid<T>(Var<T>);                                                      \
  template Var<T> tanh<T>(Var<T>);                                                         \
  template Var<T> relu<T>(Var<T>);                                                         \
  template Var<T> conv2d<T>(Var<T>, Var<T>, Var<T>, std::size_t);                          \
  template Var<T> batch_norm<T>(Var<T>, Var<T>, Var<T>, BatchNormStats<T>&, bool, T, T);   \
  template Var<T> dropout<T>(Var<T>, T, std::mt19937_64&, bool, std::size_t);              \
  template Var<T> bce_with_logits<T>(Var<T>, const Tensor<T>&);

SEKGE_INSTANTIATE(float)
SEKGE_INSTANTIATE(double)
#undef SEKGE_INSTANTIATE

}  // namespace sekge
