#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ropnet/tensor.hpp"

namespace ropnet {

enum class LayerKind { Conv, DepthwiseConv, BatchNorm, Relu, Sigmoid, Flatten, Dense };

const char* layer_kind_name(LayerKind k);
LayerKind layer_kind_from(const std::string& name);

struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  ConvConfig conv;    // Conv / DepthwiseConv
  int64_t units = 0;  // Dense
};

struct ModelSpec {
  std::string name;
  int64_t input_h = 0;
  int64_t input_w = 0;
  int64_t input_c = 3;
  double width_multiplier = 1.0;
  std::vector<LayerSpec> layers;
};

// Named parameter tensors in insertion (= layer) order. Names follow
// "l<layer>.<field>", e.g. "l0.weight", "l1.gamma", "l1.running_mean".
template <typename T>
class ParametersT {
 public:
  void add(const std::string& name, TensorT<T> t) {
    if (map_.count(name)) raise(ErrorKind::Parameter, "duplicate parameter '" + name + "'");
    order_.push_back(name);
    map_.emplace(name, std::move(t));
  }

  bool has(const std::string& name) const { return map_.count(name) != 0; }

  TensorT<T>& at(const std::string& name) {
    auto it = map_.find(name);
    if (it == map_.end()) raise(ErrorKind::Parameter, "unknown parameter '" + name + "'");
    return it->second;
  }
  const TensorT<T>& at(const std::string& name) const {
    auto it = map_.find(name);
    if (it == map_.end()) raise(ErrorKind::Parameter, "unknown parameter '" + name + "'");
    return it->second;
  }

  const std::vector<std::string>& names() const { return order_; }
  size_t size() const { return order_.size(); }

  template <typename U>
  ParametersT<U> cast() const {
    ParametersT<U> out;
    for (const auto& n : order_) out.add(n, map_.at(n).template cast<U>());
    return out;
  }

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, TensorT<T>> map_;
};

using Parameters = ParametersT<float>;

// running statistics are updated by forward passes, never by the optimizer
bool is_trainable_param(const std::string& name);
std::string param_name(int64_t layer, const char* field);

struct ParamCount {
  int64_t trainable = 0;
  int64_t total = 0;
};

template <typename T>
ParamCount count_parameters(const ParametersT<T>& params);

struct BuiltModel {
  ModelSpec spec;
  Parameters params;
};

// Reference classifier: three [conv3x3 s1 + BN + ReLU, conv3x3 s2 + BN + ReLU]
// blocks with base channels (16,32,64) scaled by the width multiplier, then
// flatten -> dense(160) -> ReLU -> dense(1) -> sigmoid.
BuiltModel build_custom_rop_net(int64_t input_size, double width_multiplier, uint64_t seed);

// Inference-only benchmark baseline in the MobileNet mold: stem conv 3x3
// stride 2, eight [depthwise 3x3 + BN + ReLU, pointwise 1x1 + BN + ReLU]
// blocks (stride-2 depthwise in blocks 2,4,6,8), flatten, dense(1), sigmoid.
BuiltModel build_mobilenet_like(int64_t input_size, uint64_t seed);

// Per-layer output shapes for a batch of n; raises a shape error on any
// incompatible consecutive pair.
std::vector<std::vector<int64_t>> infer_shapes(const ModelSpec& spec, int64_t batch);

template <typename T>
TensorT<T> forward(const ModelSpec& spec, ParametersT<T>& params, const TensorT<T>& batch,
                   BatchNormMode mode);

// infer mode: running stats are read, never written
template <typename T>
TensorT<T> forward(const ModelSpec& spec, const ParametersT<T>& params, const TensorT<T>& batch);

void save_model(const ModelSpec& spec, const Parameters& params, const std::string& path);
BuiltModel load_model(const std::string& path);

}  // namespace ropnet
