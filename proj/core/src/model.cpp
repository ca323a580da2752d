#include "icnt/model.hpp"

#include <stdexcept>

namespace icnt {

std::string arch_name(Arch a) {
  return a == Arch::kConvnext ? "convnext" : "plaincnn";
}

Arch arch_from_name(const std::string& name) {
  if (name == "convnext") return Arch::kConvnext;
  if (name == "plaincnn") return Arch::kPlainCnn;
  throw std::invalid_argument("unknown architecture: " + name);
}

void ModelConfig::validate() const {
  if (arch == Arch::kConvnext) {
    backbone.validate();
    head.validate();
    if (head.channels != backbone.out_channels())
      throw std::invalid_argument("head channels " + std::to_string(head.channels) +
                                  " do not match backbone output " +
                                  std::to_string(backbone.out_channels()));
  } else {
    if (head.n_class < 2) throw std::invalid_argument("n_class must be >= 2");
    for (int w : cnn_widths)
      if (w <= 0) throw std::invalid_argument("plain-CNN widths must be positive");
  }
}

namespace {

template <typename T>
void init_plain_cnn(ParamStoreT<T>& params, const ModelConfig& cfg, Rng& rng) {
  int cin = cfg.backbone.in_channels;
  for (int i = 0; i < 3; ++i) {
    const int cout = cfg.cnn_widths[static_cast<size_t>(i)];
    const std::string prefix = "cnn.conv" + std::to_string(i);
    params.add(prefix + ".w", trunc_normal_init<T>({cout, cin, 3, 3}, rng));
    params.add(prefix + ".b", TensorT<T>::zeros({cout}));
    cin = cout;
  }
  params.add("cnn.fc.w", trunc_normal_init<T>({cfg.head.n_class, cin}, rng));
  params.add("cnn.fc.b", TensorT<T>::zeros({cfg.head.n_class}));
}

template <typename T>
ModelOutput<T> plain_cnn_forward(GraphT<T>& g, ModelT<T>& model, const ValueT<T>& images) {
  auto h = images;
  for (int i = 0; i < 3; ++i) {
    const std::string prefix = "cnn.conv" + std::to_string(i);
    Conv2dSpec spec;
    spec.padding = 1;
    h = g.conv2d(h, model.params.get(prefix + ".w"), model.params.get(prefix + ".b"), spec);
    h = g.relu(h);
    h = g.max_pool2d(h, 2, 2);
  }
  auto features = g.global_avg_pool(h);  // already post-ReLU
  auto logits = g.linear(features, model.params.get("cnn.fc.w"), model.params.get("cnn.fc.b"));
  return {logits, features};
}

}  // namespace

template <typename T>
ModelT<T> init_model(const ModelConfig& config, uint64_t seed) {
  config.validate();
  ModelT<T> model;
  model.config = config;
  Rng rng(Rng::mix(seed, 0x6d6f64656cull));  // independent stream per purpose
  if (config.arch == Arch::kConvnext) {
    init_backbone(model.params, config.backbone, rng);
    init_head(model.params, config.head, rng);
  } else {
    init_plain_cnn(model.params, config, rng);
  }
  return model;
}

template <typename T>
ModelOutput<T> model_forward(GraphT<T>& g, ModelT<T>& model, const ValueT<T>& images, bool training,
                             Rng& rng) {
  if (model.config.arch == Arch::kPlainCnn) return plain_cnn_forward(g, model, images);
  auto fmap = backbone_forward(g, images, model.params, model.config.backbone);
  auto out = head_forward(g, fmap, model.params, model.config.head, training, rng);
  return {out.logits, out.prelogits};
}

template ModelT<float> init_model<float>(const ModelConfig&, uint64_t);
template ModelT<double> init_model<double>(const ModelConfig&, uint64_t);
template ModelOutput<float> model_forward<float>(GraphT<float>&, ModelT<float>&, const ValueT<float>&,
                                                 bool, Rng&);
template ModelOutput<double> model_forward<double>(GraphT<double>&, ModelT<double>&,
                                                   const ValueT<double>&, bool, Rng&);

}  // namespace icnt
