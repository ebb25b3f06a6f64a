#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>

#include "sekge/autodiff.hpp"

namespace sekge {

struct AdamOptions {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Per-parameter first/second moment estimates and the shared step count.
template <typename T>
struct AdamState {
  std::unordered_map<const Parameter<T>*, std::pair<Tensor<T>, Tensor<T>>> moments;
  std::int64_t step = 0;
};

/// One bias-corrected Adam update of every parameter from its `grad`, which
/// is reset to zero afterwards. A non-finite gradient aborts before any
/// parameter is touched and names the offender.
template <typename T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state,
               const AdamOptions& options);

}  // namespace sekge
