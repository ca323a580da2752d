#pragma once

#include <string>

#include "icnt/backbone.hpp"
#include "icnt/head.hpp"

namespace icnt {

enum class Arch {
  kConvnext,  // backbone + pooling fusion + gate + classifier
  kPlainCnn,  // three conv/pool blocks + fully connected baseline
};

std::string arch_name(Arch a);
Arch arch_from_name(const std::string& name);

struct ModelConfig {
  Arch arch = Arch::kConvnext;
  BackboneConfig backbone;
  HeadConfig head;
  std::array<int, 3> cnn_widths{16, 32, 64};  // plain-CNN channel progression

  int feature_dim() const {
    return arch == Arch::kConvnext ? head.hidden : cnn_widths[2];
  }
  void validate() const;
};

template <typename T>
struct ModelT {
  ModelConfig config;
  ParamStoreT<T> params;
};

using Model = ModelT<float>;

template <typename T>
ModelT<T> init_model(const ModelConfig& config, uint64_t seed);

template <typename T>
struct ModelOutput {
  ValueT<T> logits;     // [N, n_class]
  ValueT<T> prelogits;  // [N, feature_dim], post-ReLU, pre-dropout
};

/// Full forward pass. Input spatial size must be divisible by 32 for the
/// convnext arch and by 8 for the plain CNN.
template <typename T>
ModelOutput<T> model_forward(GraphT<T>& g, ModelT<T>& model, const ValueT<T>& images, bool training,
                             Rng& rng);

}  // namespace icnt
