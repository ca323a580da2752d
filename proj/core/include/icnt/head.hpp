#pragma once

#include <algorithm>

#include "icnt/params.hpp"
#include "icnt/rng.hpp"

namespace icnt {

/// Classification head: dual global pooling fusion, bottleneck channel
/// gating, and a two-layer classifier with dropout on the hidden features.
struct HeadConfig {
  int channels = 192;      // backbone output channels C
  int r = 16;              // gate compression ratio
  int hidden = 256;        // classifier hidden width
  int n_class = 2;
  double dropout_p = 0.3;
  bool use_gmp = true;       // fuse max pooling alongside average pooling
  bool use_sevector = true;  // enable the channel gate

  int fused_dim() const { return use_gmp ? 2 * channels : channels; }
  int sevector_hidden() const { return std::max(8, fused_dim() / r); }
  void validate() const;
};

template <typename T>
void init_head(ParamStoreT<T>& params, const HeadConfig& config, Rng& rng);

/// [GAP(F); GMP(F)] along channels, or GAP alone when use_gmp is false.
template <typename T>
ValueT<T> gagm_fuse(GraphT<T>& g, const ValueT<T>& feature_map, bool use_gmp);

/// sigmoid(W2 relu(W1 v + b1) + b2) gating applied multiplicatively;
/// exact identity when disabled.
template <typename T>
ValueT<T> sevector(GraphT<T>& g, const ValueT<T>& fused, const ParamStoreT<T>& params, bool enabled);

template <typename T>
struct HeadOutput {
  ValueT<T> logits;
  ValueT<T> prelogits;  // post-ReLU hidden features, before dropout
};

/// prelogits = relu(Wc1 v + bc1); logits = Wc2 dropout(prelogits) + bc2.
template <typename T>
HeadOutput<T> classifier_head(GraphT<T>& g, const ValueT<T>& v_att, const ParamStoreT<T>& params,
                              const HeadConfig& config, bool training, Rng& rng);

template <typename T>
HeadOutput<T> head_forward(GraphT<T>& g, const ValueT<T>& feature_map, const ParamStoreT<T>& params,
                           const HeadConfig& config, bool training, Rng& rng);

}  // namespace icnt
