#include "icnt/backbone.hpp"

#include <stdexcept>

namespace icnt {

void BackboneConfig::validate() const {
  if (in_channels != 1 && in_channels != 3)
    throw std::invalid_argument("backbone in_channels must be 1 or 3, got " + std::to_string(in_channels));
  for (int w : stage_widths)
    if (w <= 0) throw std::invalid_argument("backbone stage widths must be positive");
  for (size_t i = 1; i < stage_widths.size(); ++i)
    if (stage_widths[i] < stage_widths[i - 1])
      throw std::invalid_argument("backbone stage widths must be nondecreasing");
  for (int d : stage_depths)
    if (d <= 0) throw std::invalid_argument("backbone stage depths must be positive");
  if (stem_kernel < 1 || stem_stride < 1)
    throw std::invalid_argument("backbone stem kernel/stride must be >= 1");
}

template <typename T>
TensorT<T> trunc_normal_init(std::vector<int64_t> shape, Rng& rng, double std_dev) {
  TensorT<T> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<T>(rng.truncated_normal(std_dev));
  return t;
}

namespace {

template <typename T>
void add_norm(ParamStoreT<T>& params, const std::string& prefix, int64_t c) {
  params.add(prefix + ".gamma", TensorT<T>::full({c}, T(1)));
  params.add(prefix + ".beta", TensorT<T>::zeros({c}));
}

}  // namespace

template <typename T>
void init_backbone(ParamStoreT<T>& params, const BackboneConfig& config, Rng& rng) {
  config.validate();
  const auto& w = config.stage_widths;

  params.add("stem.conv.w", trunc_normal_init<T>({w[0], config.in_channels, config.stem_kernel,
                                                  config.stem_kernel}, rng));
  params.add("stem.conv.b", TensorT<T>::zeros({w[0]}));
  add_norm(params, "stem.norm", w[0]);

  for (int s = 0; s < 4; ++s) {
    const std::string stage = "stage" + std::to_string(s);
    if (s > 0) {
      add_norm(params, stage + ".down.norm", w[s - 1]);
      params.add(stage + ".down.conv.w", trunc_normal_init<T>({w[s], w[s - 1], 2, 2}, rng));
      params.add(stage + ".down.conv.b", TensorT<T>::zeros({w[s]}));
    }
    for (int b = 0; b < config.stage_depths[static_cast<size_t>(s)]; ++b) {
      const std::string block = stage + ".block" + std::to_string(b);
      params.add(block + ".dw.w", trunc_normal_init<T>({w[s], 1, 7, 7}, rng));
      params.add(block + ".dw.b", TensorT<T>::zeros({w[s]}));
      add_norm(params, block + ".norm", w[s]);
      params.add(block + ".pw1.w", trunc_normal_init<T>({4 * w[s], w[s], 1, 1}, rng));
      params.add(block + ".pw1.b", TensorT<T>::zeros({4 * w[s]}));
      params.add(block + ".pw2.w", trunc_normal_init<T>({w[s], 4 * w[s], 1, 1}, rng));
      params.add(block + ".pw2.b", TensorT<T>::zeros({w[s]}));
    }
  }
}

template <typename T>
ValueT<T> convnext_block(GraphT<T>& g, const ValueT<T>& x, const ParamStoreT<T>& params,
                         const std::string& prefix) {
  const int64_t c = x->value.dim(1);
  const auto& dw_w = params.get(prefix + ".dw.w");
  if (dw_w->value.dim(0) != c)
    throw std::invalid_argument(prefix + " expects " + std::to_string(dw_w->value.dim(0)) +
                                " channels, input has " + std::to_string(c));
  Conv2dSpec dw;
  dw.stride = 1;
  dw.padding = 3;
  dw.groups = static_cast<int>(c);
  auto h = g.conv2d(x, dw_w, params.get(prefix + ".dw.b"), dw);
  h = g.layer_norm(h, params.get(prefix + ".norm.gamma"), params.get(prefix + ".norm.beta"), kLayerNormEps);
  h = g.conv2d(h, params.get(prefix + ".pw1.w"), params.get(prefix + ".pw1.b"), Conv2dSpec{});
  h = g.gelu(h);
  h = g.conv2d(h, params.get(prefix + ".pw2.w"), params.get(prefix + ".pw2.b"), Conv2dSpec{});
  return g.add(x, h);
}

template <typename T>
ValueT<T> backbone_forward(GraphT<T>& g, const ValueT<T>& x, const ParamStoreT<T>& params,
                           const BackboneConfig& config) {
  config.validate();
  if (x->value.rank() != 4)
    throw std::invalid_argument("backbone input must be NxCxHxW, got " + shape_str(x->value.shape));
  if (x->value.dim(1) != config.in_channels)
    throw std::invalid_argument("backbone expects " + std::to_string(config.in_channels) +
                                " input channels, got " + std::to_string(x->value.dim(1)));
  const int64_t stride = config.total_stride();
  if (x->value.dim(2) % stride != 0 || x->value.dim(3) % stride != 0)
    throw std::invalid_argument("backbone input " + std::to_string(x->value.dim(2)) + "x" +
                                std::to_string(x->value.dim(3)) + " must be divisible by " +
                                std::to_string(stride));

  Conv2dSpec stem;
  stem.stride = config.stem_stride;
  auto h = g.conv2d(x, params.get("stem.conv.w"), params.get("stem.conv.b"), stem);
  h = g.layer_norm(h, params.get("stem.norm.gamma"), params.get("stem.norm.beta"), kLayerNormEps);

  for (int s = 0; s < 4; ++s) {
    const std::string stage = "stage" + std::to_string(s);
    if (s > 0) {
      h = g.layer_norm(h, params.get(stage + ".down.norm.gamma"), params.get(stage + ".down.norm.beta"),
                       kLayerNormEps);
      Conv2dSpec down;
      down.stride = 2;
      h = g.conv2d(h, params.get(stage + ".down.conv.w"), params.get(stage + ".down.conv.b"), down);
    }
    for (int b = 0; b < config.stage_depths[static_cast<size_t>(s)]; ++b)
      h = convnext_block(g, h, params, stage + ".block" + std::to_string(b));
  }
  return h;
}

#define ICNT_INSTANTIATE_BACKBONE(T)                                                                 \
  template TensorT<T> trunc_normal_init<T>(std::vector<int64_t>, Rng&, double);                      \
  template void init_backbone<T>(ParamStoreT<T>&, const BackboneConfig&, Rng&);                      \
  template ValueT<T> convnext_block<T>(GraphT<T>&, const ValueT<T>&, const ParamStoreT<T>&,          \
                                       const std::string&);                                          \
  template ValueT<T> backbone_forward<T>(GraphT<T>&, const ValueT<T>&, const ParamStoreT<T>&,        \
                                         const BackboneConfig&);

ICNT_INSTANTIATE_BACKBONE(float)
ICNT_INSTANTIATE_BACKBONE(double)

#undef ICNT_INSTANTIATE_BACKBONE

}  // namespace icnt
