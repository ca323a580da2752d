#include "icnt/head.hpp"

#include <stdexcept>

#include "icnt/backbone.hpp"

namespace icnt {

void HeadConfig::validate() const {
  if (channels < 1) throw std::invalid_argument("head channels must be >= 1");
  if (r < 1) throw std::invalid_argument("head compression ratio must be >= 1");
  if (hidden < 1) throw std::invalid_argument("head hidden width must be >= 1");
  if (n_class < 2) throw std::invalid_argument("head n_class must be >= 2, got " + std::to_string(n_class));
  if (dropout_p < 0.0 || dropout_p >= 1.0)
    throw std::invalid_argument("head dropout probability must be in [0,1)");
}

template <typename T>
void init_head(ParamStoreT<T>& params, const HeadConfig& config, Rng& rng) {
  config.validate();
  const int64_t d = config.fused_dim();
  const int64_t h = config.sevector_hidden();
  if (config.use_sevector) {
    params.add("head.se.w1", trunc_normal_init<T>({h, d}, rng));
    params.add("head.se.b1", TensorT<T>::zeros({h}));
    params.add("head.se.w2", trunc_normal_init<T>({d, h}, rng));
    params.add("head.se.b2", TensorT<T>::zeros({d}));
  }
  params.add("head.cls.w1", trunc_normal_init<T>({config.hidden, d}, rng));
  params.add("head.cls.b1", TensorT<T>::zeros({config.hidden}));
  params.add("head.cls.w2", trunc_normal_init<T>({config.n_class, config.hidden}, rng));
  params.add("head.cls.b2", TensorT<T>::zeros({config.n_class}));
}

template <typename T>
ValueT<T> gagm_fuse(GraphT<T>& g, const ValueT<T>& feature_map, bool use_gmp) {
  auto avg = g.global_avg_pool(feature_map);
  if (!use_gmp) return avg;
  auto mx = g.global_max_pool(feature_map);
  return g.concat_cols(avg, mx);
}

template <typename T>
ValueT<T> sevector(GraphT<T>& g, const ValueT<T>& fused, const ParamStoreT<T>& params, bool enabled) {
  if (!enabled) return fused;
  auto h = g.linear(fused, params.get("head.se.w1"), params.get("head.se.b1"));
  h = g.relu(h);
  auto gate = g.linear(h, params.get("head.se.w2"), params.get("head.se.b2"));
  gate = g.sigmoid(gate);
  return g.mul(fused, gate);
}

template <typename T>
HeadOutput<T> classifier_head(GraphT<T>& g, const ValueT<T>& v_att, const ParamStoreT<T>& params,
                              const HeadConfig& config, bool training, Rng& rng) {
  auto hidden = g.linear(v_att, params.get("head.cls.w1"), params.get("head.cls.b1"));
  auto prelogits = g.relu(hidden);
  auto dropped = g.dropout(prelogits, config.dropout_p, training, rng);
  auto logits = g.linear(dropped, params.get("head.cls.w2"), params.get("head.cls.b2"));
  return {logits, prelogits};
}

template <typename T>
HeadOutput<T> head_forward(GraphT<T>& g, const ValueT<T>& feature_map, const ParamStoreT<T>& params,
                           const HeadConfig& config, bool training, Rng& rng) {
  config.validate();
  if (feature_map->value.dim(1) != config.channels)
    throw std::invalid_argument("head expects " + std::to_string(config.channels) +
                                " channels, feature map has " + std::to_string(feature_map->value.dim(1)));
  auto fused = gagm_fuse(g, feature_map, config.use_gmp);
  auto gated = sevector(g, fused, params, config.use_sevector);
  return classifier_head(g, gated, params, config, training, rng);
}

#define ICNT_INSTANTIATE_HEAD(T)                                                                   \
  template void init_head<T>(ParamStoreT<T>&, const HeadConfig&, Rng&);                            \
  template ValueT<T> gagm_fuse<T>(GraphT<T>&, const ValueT<T>&, bool);                             \
  template ValueT<T> sevector<T>(GraphT<T>&, const ValueT<T>&, const ParamStoreT<T>&, bool);       \
  template HeadOutput<T> classifier_head<T>(GraphT<T>&, const ValueT<T>&, const ParamStoreT<T>&,   \
                                            const HeadConfig&, bool, Rng&);                        \
  template HeadOutput<T> head_forward<T>(GraphT<T>&, const ValueT<T>&, const ParamStoreT<T>&,      \
                                         const HeadConfig&, bool, Rng&);

ICNT_INSTANTIATE_HEAD(float)
ICNT_INSTANTIATE_HEAD(double)

#undef ICNT_INSTANTIATE_HEAD

}  // namespace icnt
