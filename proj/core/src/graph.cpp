#include "icnt/graph.hpp"

#include <stdexcept>

namespace icnt {

template <typename T>
ValueT<T> GraphT<T>::output_like(TensorT<T> value, std::initializer_list<const ValueT<T>*> inputs) {
  bool req = false;
  for (const auto* in : inputs)
    if (*in && (*in)->requires_grad) req = true;
  auto out = make_value<T>(std::move(value), req);
  return out;
}

template <typename T>
ValueT<T> GraphT<T>::conv2d(const ValueT<T>& x, const ValueT<T>& w, const ValueT<T>& b,
                            const Conv2dSpec& spec) {
  auto out = output_like(conv2d_forward<T>(x->value, w->value, b ? &b->value : nullptr, spec), {&x, &w, &b});
  if (out->requires_grad) {
    record([x, w, b, out, spec] {
      if (!out->has_grad()) return;
      conv2d_backward<T>(x->value, w->value, spec, out->grad,
                         x->requires_grad ? &x->ensure_grad() : nullptr,
                         w->requires_grad ? &w->ensure_grad() : nullptr,
                         (b && b->requires_grad) ? &b->ensure_grad() : nullptr);
    });
  }
  return out;
}

template <typename T>
ValueT<T> GraphT<T>::linear(const ValueT<T>& x, const ValueT<T>& w, const ValueT<T>& b) {
  auto out = output_like(linear_forward<T>(x->value, w->value, b->value), {&x, &w, &b});
  if (out->requires_grad) {
    record([x, w, b, out] {
      if (!out->has_grad()) return;
      linear_backward<T>(x->value, w->value, out->grad,
                         x->requires_grad ? &x->ensure_grad() : nullptr,
                         w->requires_grad ? &w->ensure_grad() : nullptr,
                         b->requires_grad ? &b->ensure_grad() : nullptr);
    });
  }
  return out;
}

template <typename T>
ValueT<T> GraphT<T>::layer_norm(const ValueT<T>& x, const ValueT<T>& gamma, const ValueT<T>& beta,
                                double eps) {
  auto stats = std::make_shared<LayerNormStats>();
  const bool need = x->requires_grad || gamma->requires_grad || beta->requires_grad;
  auto out = output_like(layer_norm_forward<T>(x->value, gamma->value, beta->value, eps,
                                               need ? stats.get() : nullptr),
                         {&x, &gamma, &beta});
  if (out->requires_grad) {
    record([x, gamma, beta, out, stats] {
      if (!out->has_grad()) return;
      layer_norm_backward<T>(x->value, gamma->value, *stats, out->grad,
                             x->requires_grad ? &x->ensure_grad() : nullptr,
                             gamma->requires_grad ? &gamma->ensure_grad() : nullptr,
                             beta->requires_grad ? &beta->ensure_grad() : nullptr);
    });
  }
  return out;
}

template <typename T>
ValueT<T> GraphT<T>::activation(const ValueT<T>& x, Activation kind) {
  auto out = output_like(activation_forward<T>(x->value, kind), {&x});
  if (out->requires_grad) {
    record([x, out, kind] {
      if (!out->has_grad()) return;
      activation_backward<T>(x->value, kind, out->grad, &x->ensure_grad());
    });
  }
  return out;
}

template <typename T>
ValueT<T> GraphT<T>::global_avg_pool(const ValueT<T>& x) {
  auto out = output_like(global_avg_pool_forward<T>(x->value), {&x});
  if (out->requires_grad) {
    auto shape = x->value.shape;
    record([x, out, shape] {
      if (!out->has_grad()) return;
      global_avg_pool_backward<T>(shape, out->grad, &x->ensure_grad());
    });
  }
  return out;
}

template <typename T>
ValueT<T> GraphT<T>::global_max_pool(const ValueT<T>& x) {
  auto argmax = std::make_shared<std::vector<int64_t>>();
  const bool need = x->requires_grad;
  auto out = output_like(global_max_pool_forward<T>(x->value, need ? argmax.get() : nullptr), {&x});
  if (out->requires_grad) {
    auto shape = x->value.shape;
    record([x, out, shape, argmax] {
      if (!out->has_grad()) return;
      global_max_pool_backward<T>(shape, *argmax, out->grad, &x->ensure_grad());
    });
  }
  return out;
}

template <typename T>
ValueT<T> GraphT<T>::max_pool2d(const ValueT<T>& x, int kernel, int stride) {
  auto argmax = std::make_shared<std::vector<int64_t>>();
  const bool need = x->requires_grad;
  auto out = output_like(max_pool2d_forward<T>(x->value, kernel, stride, need ? argmax.get() : nullptr), {&x});
  if (out->requires_grad) {
    auto shape = x->value.shape;
    record([x, out, shape, argmax] {
      if (!out->has_grad()) return;
      max_pool2d_backward<T>(shape, *argmax, out->grad, &x->ensure_grad());
    });
  }
  return out;
}

template <typename T>
ValueT<T> GraphT<T>::concat_cols(const ValueT<T>& a, const ValueT<T>& b) {
  auto out = output_like(concat_cols_forward<T>(a->value, b->value), {&a, &b});
  if (out->requires_grad) {
    const int64_t c1 = a->value.dim(1), c2 = b->value.dim(1);
    record([a, b, out, c1, c2] {
      if (!out->has_grad()) return;
      concat_cols_backward<T>(c1, c2, out->grad,
                              a->requires_grad ? &a->ensure_grad() : nullptr,
                              b->requires_grad ? &b->ensure_grad() : nullptr);
    });
  }
  return out;
}

template <typename T>
ValueT<T> GraphT<T>::dropout(const ValueT<T>& x, double p, bool training, Rng& rng) {
  if (p < 0.0 || p >= 1.0)
    throw std::invalid_argument("dropout probability must be in [0,1), got " + std::to_string(p));
  if (!training || p == 0.0) {
    // Identity in evaluation mode; keep the node so gradients still flow.
    auto out = output_like(TensorT<T>(x->value), {&x});
    if (out->requires_grad) {
      record([x, out] {
        if (!out->has_grad()) return;
        axpy(out->grad.numel(), T(1), out->grad.ptr(), x->ensure_grad().ptr());
      });
    }
    return out;
  }
  auto mask = std::make_shared<std::vector<T>>(dropout_mask<T>(x->value.numel(), p, rng));
  auto out = output_like(dropout_apply<T>(x->value, *mask), {&x});
  if (out->requires_grad) {
    record([x, out, mask] {
      if (!out->has_grad()) return;
      T* gx = x->ensure_grad().ptr();
      const T* gy = out->grad.ptr();
      for (int64_t i = 0; i < out->grad.numel(); ++i) gx[i] += gy[i] * (*mask)[static_cast<size_t>(i)];
    });
  }
  return out;
}

template <typename T>
ValueT<T> GraphT<T>::add(const ValueT<T>& a, const ValueT<T>& b) {
  auto out = output_like(add_forward<T>(a->value, b->value), {&a, &b});
  if (out->requires_grad) {
    record([a, b, out] {
      if (!out->has_grad()) return;
      const int64_t n = out->grad.numel();
      if (a->requires_grad) axpy(n, T(1), out->grad.ptr(), a->ensure_grad().ptr());
      if (b->requires_grad) axpy(n, T(1), out->grad.ptr(), b->ensure_grad().ptr());
    });
  }
  return out;
}

template <typename T>
ValueT<T> GraphT<T>::mul(const ValueT<T>& a, const ValueT<T>& b) {
  auto out = output_like(mul_forward<T>(a->value, b->value), {&a, &b});
  if (out->requires_grad) {
    record([a, b, out] {
      if (!out->has_grad()) return;
      const int64_t n = out->grad.numel();
      const T* gy = out->grad.ptr();
      if (a->requires_grad) {
        T* ga = a->ensure_grad().ptr();
        const T* bv = b->value.ptr();
        for (int64_t i = 0; i < n; ++i) ga[i] += gy[i] * bv[i];
      }
      if (b->requires_grad) {
        T* gb = b->ensure_grad().ptr();
        const T* av = a->value.ptr();
        for (int64_t i = 0; i < n; ++i) gb[i] += gy[i] * av[i];
      }
    });
  }
  return out;
}

template <typename T>
ValueT<T> GraphT<T>::reduce_mean(const ValueT<T>& x) {
  auto out = output_like(reduce_mean_forward<T>(x->value), {&x});
  if (out->requires_grad) {
    record([x, out] {
      if (!out->has_grad()) return;
      const T g = out->grad.data[0] / static_cast<T>(x->value.numel());
      T* gx = x->ensure_grad().ptr();
      for (int64_t i = 0; i < x->value.numel(); ++i) gx[i] += g;
    });
  }
  return out;
}

template <typename T>
ValueT<T> GraphT<T>::cross_entropy(const ValueT<T>& logits, std::vector<int> labels) {
  auto probs = std::make_shared<TensorT<T>>();
  const bool need = logits->requires_grad;
  const T loss = cross_entropy_forward<T>(logits->value, labels, need ? probs.get() : nullptr);
  auto out = output_like(TensorT<T>::scalar(loss), {&logits});
  if (out->requires_grad) {
    auto lbl = std::make_shared<std::vector<int>>(std::move(labels));
    record([logits, out, probs, lbl] {
      if (!out->has_grad()) return;
      cross_entropy_backward<T>(*probs, *lbl, out->grad.data[0], &logits->ensure_grad());
    });
  }
  return out;
}

template <typename T>
ValueT<T> GraphT<T>::feature_smoothing(const ValueT<T>& features, std::vector<int> labels) {
  auto grad_unit = std::make_shared<TensorT<T>>();
  const bool need = features->requires_grad;
  const T loss = feature_smoothing_forward<T>(features->value, labels, need ? grad_unit.get() : nullptr);
  auto out = output_like(TensorT<T>::scalar(loss), {&features});
  if (out->requires_grad) {
    record([features, out, grad_unit] {
      if (!out->has_grad()) return;
      const T g = out->grad.data[0];
      axpy(grad_unit->numel(), g, grad_unit->ptr(), features->ensure_grad().ptr());
    });
  }
  return out;
}

template <typename T>
ValueT<T> GraphT<T>::add_scaled(const ValueT<T>& a, const ValueT<T>& b, T scale) {
  if (a->value.numel() != 1 || b->value.numel() != 1)
    throw std::invalid_argument("add_scaled expects scalar nodes");
  auto out = output_like(TensorT<T>::scalar(a->value.data[0] + scale * b->value.data[0]), {&a, &b});
  if (out->requires_grad) {
    record([a, b, out, scale] {
      if (!out->has_grad()) return;
      const T g = out->grad.data[0];
      if (a->requires_grad) a->ensure_grad().data[0] += g;
      if (b->requires_grad) b->ensure_grad().data[0] += g * scale;
    });
  }
  return out;
}

template <typename T>
void GraphT<T>::backward(const ValueT<T>& root) {
  if (root->value.numel() != 1)
    throw std::logic_error("backward without an explicit seed requires a scalar root, got " +
                           shape_str(root->value.shape));
  backward(root, TensorT<T>::scalar(T(1)));
}

template <typename T>
void GraphT<T>::backward(const ValueT<T>& root, const TensorT<T>& seed) {
  if (!root->requires_grad)
    throw std::logic_error("backward on a root that does not require gradients");
  if (seed.shape != root->value.shape)
    throw std::invalid_argument("backward seed shape " + shape_str(seed.shape) +
                                " does not match root " + shape_str(root->value.shape));
  auto& g = root->ensure_grad();
  for (int64_t i = 0; i < seed.numel(); ++i) g.data[i] += seed.data[i];
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
}

template class GraphT<float>;
template class GraphT<double>;

}  // namespace icnt
