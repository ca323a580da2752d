#pragma once

#include <cstdint>
#include <vector>

#include "icnt/rng.hpp"
#include "icnt/tensor.hpp"

namespace icnt {

// Forward/backward kernels for the op set used by the model family.
// Convolution uses the cross-correlation convention with zero padding.
// Backward kernels accumulate (+=) into pre-allocated gradient tensors so a
// tensor feeding several ops collects all contributions; pass nullptr to skip
// a gradient. Writes are partitioned disjointly across the worker pool, so
// results are identical for any thread count.

struct Conv2dSpec {
  int stride = 1;
  int padding = 0;
  int groups = 1;
};

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>* bias,
                          const Conv2dSpec& spec);

template <typename T>
void conv2d_backward(const TensorT<T>& x, const TensorT<T>& w, const Conv2dSpec& spec,
                     const TensorT<T>& gy, TensorT<T>* gx, TensorT<T>* gw, TensorT<T>* gb);

/// y = x * W^T + b for x [N,Din], W [Dout,Din], b [Dout].
template <typename T>
TensorT<T> linear_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b);

template <typename T>
void linear_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& gy,
                     TensorT<T>* gx, TensorT<T>* gw, TensorT<T>* gb);

/// Normalizes over dimension 1 (channels) at every other position, population
/// variance, then applies the per-channel affine. Caches mean and 1/std for
/// the backward pass when stats != nullptr.
struct LayerNormStats {
  std::vector<double> mean;  // one entry per (outer, inner) position
  std::vector<double> rstd;
};

template <typename T>
TensorT<T> layer_norm_forward(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                              double eps, LayerNormStats* stats);

template <typename T>
void layer_norm_backward(const TensorT<T>& x, const TensorT<T>& gamma, const LayerNormStats& stats,
                         const TensorT<T>& gy, TensorT<T>* gx, TensorT<T>* ggamma, TensorT<T>* gbeta);

enum class Activation { kRelu, kGelu, kSigmoid };

template <typename T>
TensorT<T> activation_forward(const TensorT<T>& x, Activation kind);

template <typename T>
void activation_backward(const TensorT<T>& x, Activation kind, const TensorT<T>& gy, TensorT<T>* gx);

/// NxCxHxW -> NxC per-channel spatial mean.
template <typename T>
TensorT<T> global_avg_pool_forward(const TensorT<T>& x);

template <typename T>
void global_avg_pool_backward(const std::vector<int64_t>& x_shape, const TensorT<T>& gy, TensorT<T>* gx);

/// NxCxHxW -> NxC per-channel spatial max; argmax records the first maximum in
/// row-major order, which is where backward routes the whole gradient.
template <typename T>
TensorT<T> global_max_pool_forward(const TensorT<T>& x, std::vector<int64_t>* argmax);

template <typename T>
void global_max_pool_backward(const std::vector<int64_t>& x_shape, const std::vector<int64_t>& argmax,
                              const TensorT<T>& gy, TensorT<T>* gx);

/// Spatial max pooling with a square window and no padding.
template <typename T>
TensorT<T> max_pool2d_forward(const TensorT<T>& x, int kernel, int stride, std::vector<int64_t>* argmax);

template <typename T>
void max_pool2d_backward(const std::vector<int64_t>& x_shape, const std::vector<int64_t>& argmax,
                         const TensorT<T>& gy, TensorT<T>* gx);

/// [N,C1] ++ [N,C2] -> [N,C1+C2].
template <typename T>
TensorT<T> concat_cols_forward(const TensorT<T>& a, const TensorT<T>& b);

template <typename T>
void concat_cols_backward(int64_t c1, int64_t c2, const TensorT<T>& gy, TensorT<T>* ga, TensorT<T>* gb);

/// Inverted dropout: each mask entry is 0 or 1/(1-p). Same rng state => same mask.
template <typename T>
std::vector<T> dropout_mask(int64_t n, double p, Rng& rng);

template <typename T>
TensorT<T> dropout_apply(const TensorT<T>& x, const std::vector<T>& mask);

template <typename T>
TensorT<T> add_forward(const TensorT<T>& a, const TensorT<T>& b);

template <typename T>
TensorT<T> mul_forward(const TensorT<T>& a, const TensorT<T>& b);

/// Mean over every element, returned as a 1-element tensor.
template <typename T>
TensorT<T> reduce_mean_forward(const TensorT<T>& x);

/// Row-wise stable softmax for [N,K].
template <typename T>
TensorT<T> softmax_rows(const TensorT<T>& logits);

/// Mean over the batch of -log softmax(logits)[label]. probs, when non-null,
/// receives the softmax for reuse in backward.
template <typename T>
T cross_entropy_forward(const TensorT<T>& logits, const std::vector<int>& labels, TensorT<T>* probs);

template <typename T>
void cross_entropy_backward(const TensorT<T>& probs, const std::vector<int>& labels, T gy, TensorT<T>* glogits);

/// Mean over classes present in the batch of the per-class mean squared
/// distance to the within-batch class center. grad_unit, when non-null,
/// receives d(loss)/d(features): (2 / (classes_present * n_c)) * (f - center).
template <typename T>
T feature_smoothing_forward(const TensorT<T>& features, const std::vector<int>& labels,
                            TensorT<T>* grad_unit);

// elementwise helpers
template <typename T>
void axpy(int64_t n, T alpha, const T* x, T* y);  // y += alpha * x

}  // namespace icnt
