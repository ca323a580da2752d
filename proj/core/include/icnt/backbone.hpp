#pragma once

#include <array>

#include "icnt/params.hpp"
#include "icnt/rng.hpp"

namespace icnt {

/// ConvNeXt-style feature extractor: 4x4/4 stem conv + channel norm, four
/// stages of residual blocks (depthwise 7x7 pad 3, channel norm, pointwise
/// 4x expansion, GELU, pointwise projection), with norm + 2x2/2 conv
/// downsampling between stages. Cumulative stride is 32.
struct BackboneConfig {
  int in_channels = 1;
  std::array<int, 4> stage_depths{1, 1, 2, 1};
  std::array<int, 4> stage_widths{24, 48, 96, 192};
  int stem_kernel = 4;
  int stem_stride = 4;

  static BackboneConfig toy(int in_channels = 1) { return BackboneConfig{in_channels}; }
  static BackboneConfig tiny(int in_channels = 3) {
    BackboneConfig c;
    c.in_channels = in_channels;
    c.stage_depths = {3, 3, 9, 3};
    c.stage_widths = {96, 192, 384, 768};
    return c;
  }

  int out_channels() const { return stage_widths[3]; }
  int total_stride() const { return stem_stride * 8; }
  void validate() const;
};

constexpr double kLayerNormEps = 1e-6;
constexpr double kInitStd = 0.02;

/// Conv and linear weights truncated-normal(std 0.02), biases 0, norm affines
/// identity; deterministic given the rng state.
template <typename T>
void init_backbone(ParamStoreT<T>& params, const BackboneConfig& config, Rng& rng);

/// Input spatial extents must be divisible by total_stride(). Output is
/// [N, stage_widths[3], H/32, W/32].
template <typename T>
ValueT<T> backbone_forward(GraphT<T>& g, const ValueT<T>& x, const ParamStoreT<T>& params,
                           const BackboneConfig& config);

/// One residual block operating at the given stage/block parameter prefix.
template <typename T>
ValueT<T> convnext_block(GraphT<T>& g, const ValueT<T>& x, const ParamStoreT<T>& params,
                         const std::string& prefix);

/// Weight initializers shared with the head and the plain-CNN baseline.
template <typename T>
TensorT<T> trunc_normal_init(std::vector<int64_t> shape, Rng& rng, double std_dev = kInitStd);

}  // namespace icnt
