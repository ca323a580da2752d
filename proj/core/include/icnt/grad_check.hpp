#pragma once

#include <functional>
#include <vector>

#include "icnt/graph.hpp"

namespace icnt {

/// One finite-difference comparison: an op closure rebuilt from the current
/// values of `inputs`, differentiated analytically via the tape and
/// numerically via central differences.
template <typename T>
struct GradCheckSpec {
  /// Rebuilds the forward computation from the captured input nodes. Must be
  /// deterministic: repeated invocations with the same input values have to
  /// produce the same output (seed any internal rng afresh per call).
  std::function<ValueT<T>(GraphT<T>&)> build;
  std::vector<ValueT<T>> inputs;  // nodes whose gradients are verified
  TensorT<T> seed;                // cotangent; empty requires a scalar output
  double eps = 1e-5;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  size_t worst_input = 0;   // index into spec.inputs
  int64_t worst_elem = 0;   // flat element index
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Central differences (f(x+eps) - f(x-eps)) / (2 eps) per element against the
/// tape's analytic gradient. Relative error uses the denominator
/// max(|analytic|, |numeric|, 1e-12).
template <typename T>
GradCheckReport grad_check(const GradCheckSpec<T>& spec);

}  // namespace icnt
