#include "sekge/optim.hpp"

#include <cmath>

#include "sekge/error.hpp"

namespace sekge {

template <typename T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state,
               const AdamOptions& options) {
  for (const auto* p : params) {
    if (p->grad.shape() != p->value.shape()) {
      throw ShapeError("gradient shape " + shape_string(p->grad.shape()) +
                       " does not match parameter " + p->name + " " +
                       shape_string(p->value.shape()));
    }
    for (T g : p->grad.values()) {
      if (!std::isfinite(g)) throw DataError("non-finite gradient in parameter " + p->name);
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(options.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(options.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(options.beta1);
  const T b2 = static_cast<T>(options.beta2);
  const T step_size = static_cast<T>(options.lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(options.eps);

  for (auto* p : params) {
    auto [it, fresh] = state.moments.try_emplace(p);
    auto& [m, v] = it->second;
    if (fresh) {
      m = Tensor<T>(p->value.shape());
      v = Tensor<T>(p->value.shape());
    }
    T* w = p->value.data();
    T* g = p->grad.data();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      w[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
      g[i] = T(0);
    }
  }
}

template void adam_step<float>(std::span<Parameter<float>* const>, AdamState<float>&,
                               const AdamOptions&);
template void adam_step<double>(std::span<Parameter<double>* const>, AdamState<double>&,
                                const AdamOptions&);

}  // namespace sekge
