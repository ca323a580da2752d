#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "icnt/ops.hpp"
#include "icnt/tensor.hpp"

namespace icnt {

/// A tensor participating in a recorded computation. Long-lived parameter
/// nodes keep their gradient buffer across graphs; intermediates are created
/// per graph and freed with the last handle.
template <typename T>
struct NodeT {
  TensorT<T> value;
  TensorT<T> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;

  bool has_grad() const { return !grad.empty(); }
  TensorT<T>& ensure_grad() {
    if (grad.empty()) grad = TensorT<T>::zeros(value.shape);
    return grad;
  }
  void zero_grad() {
    if (!grad.empty()) grad.fill(T(0));
  }
};

template <typename T>
using ValueT = std::shared_ptr<NodeT<T>>;

using Value = ValueT<float>;
using Node = NodeT<float>;

template <typename T>
ValueT<T> make_value(TensorT<T> v, bool requires_grad = false) {
  auto n = std::make_shared<NodeT<T>>();
  n->value = std::move(v);
  n->requires_grad = requires_grad;
  return n;
}

/// Records forward ops and replays their backward closures in reverse order.
/// Ops whose inputs carry no gradient requirement record nothing, so
/// inference traversals keep no tape and free intermediates eagerly.
template <typename T>
class GraphT {
 public:
  ValueT<T> conv2d(const ValueT<T>& x, const ValueT<T>& w, const ValueT<T>& b, const Conv2dSpec& spec);
  ValueT<T> linear(const ValueT<T>& x, const ValueT<T>& w, const ValueT<T>& b);
  ValueT<T> layer_norm(const ValueT<T>& x, const ValueT<T>& gamma, const ValueT<T>& beta, double eps);
  ValueT<T> activation(const ValueT<T>& x, Activation kind);
  ValueT<T> relu(const ValueT<T>& x) { return activation(x, Activation::kRelu); }
  ValueT<T> gelu(const ValueT<T>& x) { return activation(x, Activation::kGelu); }
  ValueT<T> sigmoid(const ValueT<T>& x) { return activation(x, Activation::kSigmoid); }
  ValueT<T> global_avg_pool(const ValueT<T>& x);
  ValueT<T> global_max_pool(const ValueT<T>& x);
  ValueT<T> max_pool2d(const ValueT<T>& x, int kernel, int stride);
  ValueT<T> concat_cols(const ValueT<T>& a, const ValueT<T>& b);
  ValueT<T> dropout(const ValueT<T>& x, double p, bool training, Rng& rng);
  ValueT<T> add(const ValueT<T>& a, const ValueT<T>& b);
  ValueT<T> mul(const ValueT<T>& a, const ValueT<T>& b);
  ValueT<T> reduce_mean(const ValueT<T>& x);
  /// Scalar cross-entropy over [N,K] logits.
  ValueT<T> cross_entropy(const ValueT<T>& logits, std::vector<int> labels);
  /// Scalar feature smoothing penalty over [N,D] features.
  ValueT<T> feature_smoothing(const ValueT<T>& features, std::vector<int> labels);
  /// a + scale * b on scalar nodes.
  ValueT<T> add_scaled(const ValueT<T>& a, const ValueT<T>& b, T scale);

  /// Seeds the root with 1 (root must be scalar) and replays the tape.
  void backward(const ValueT<T>& root);
  /// Seeds the root with an explicit cotangent of the same shape.
  void backward(const ValueT<T>& root, const TensorT<T>& seed);

  size_t tape_size() const { return tape_.size(); }

 private:
  ValueT<T> output_like(TensorT<T> value, std::initializer_list<const ValueT<T>*> inputs);
  void record(std::function<void()> fn) { tape_.push_back(std::move(fn)); }

  std::vector<std::function<void()>> tape_;
};

using Graph = GraphT<float>;
using GraphD = GraphT<double>;

}  // namespace icnt
