#pragma once

#include "ropnet/autodiff.hpp"
#include "ropnet/model.hpp"
#include "ropnet/tensor.hpp"

// Single forward engine used by plain forward() and forward_record(); taping
// must not change the arithmetic, so both paths run this exact code and the
// tape parameter only controls what gets saved.
namespace ropnet::detail {

template <typename T>
TensorT<T> dense_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
  TensorT<T> y = matmul(x, w);
  const int64_t n = y.extent(0), units = y.extent(1);
  for (int64_t i = 0; i < n; ++i) {
    T* row = y.data() + i * units;
    for (int64_t j = 0; j < units; ++j) row[j] += b[j];
  }
  return y;
}

template <typename T>
TensorT<T> apply_layers(const ModelSpec& spec, ParametersT<T>& params, const TensorT<T>& input,
                        BatchNormMode mode, TapeT<T>* tape) {
  if (spec.layers.empty()) {
    raise(ErrorKind::Capability, "model '" + spec.name + "' has no layers");
  }
  if (input.rank() != 4 || input.extent(1) != spec.input_h || input.extent(2) != spec.input_w ||
      input.extent(3) != spec.input_c) {
    raise(ErrorKind::Shape, "input batch does not match model input " +
                                std::to_string(spec.input_h) + "x" + std::to_string(spec.input_w) +
                                "x" + std::to_string(spec.input_c));
  }
  if (tape) {
    tape->spec = &spec;
    tape->params = &params;
    tape->input = input;
    tape->nodes.clear();
    tape->nodes.reserve(spec.layers.size());
  }

  TensorT<T> cur = input;
  for (size_t li = 0; li < spec.layers.size(); ++li) {
    const LayerSpec& layer = spec.layers[li];
    const int64_t idx = static_cast<int64_t>(li);
    TapeNodeT<T> node;
    node.kind = layer.kind;
    node.layer = idx;
    TensorT<T> next;
    switch (layer.kind) {
      case LayerKind::Conv: {
        next = conv2d(cur, params.at(param_name(idx, "weight")), layer.conv);
        if (tape) node.x = std::move(cur);
        break;
      }
      case LayerKind::DepthwiseConv: {
        next = depthwise_conv2d(cur, params.at(param_name(idx, "weight")), layer.conv);
        if (tape) node.x = std::move(cur);
        break;
      }
      case LayerKind::BatchNorm: {
        auto res = batch_norm_forward(cur, params.at(param_name(idx, "gamma")),
                                      params.at(param_name(idx, "beta")),
                                      params.at(param_name(idx, "running_mean")),
                                      params.at(param_name(idx, "running_var")), mode);
        next = std::move(res.y);
        if (tape) {
          if (mode != BatchNormMode::Train) {
            raise(ErrorKind::Parameter, "taped forward must run batch norm in train mode");
          }
          node.x = std::move(cur);
          node.bn_mean = std::move(res.batch_mean);
          node.bn_invstd = std::move(res.batch_invstd);
        }
        break;
      }
      case LayerKind::Relu: {
        next = relu(cur);
        if (tape) node.x = std::move(cur);
        break;
      }
      case LayerKind::Sigmoid: {
        next = sigmoid(cur);
        if (tape) node.y = next;
        break;
      }
      case LayerKind::Flatten: {
        node.in_shape = cur.shape();
        next = flatten(cur);
        break;
      }
      case LayerKind::Dense: {
        next = dense_forward(cur, params.at(param_name(idx, "weight")),
                             params.at(param_name(idx, "bias")));
        if (tape) node.x = std::move(cur);
        break;
      }
      default:
        raise(ErrorKind::Capability, "unsupported layer kind in model graph");
    }
    if (tape) tape->nodes.push_back(std::move(node));
    cur = std::move(next);
  }
  if (tape) tape->output = cur;
  return cur;
}

}  // namespace ropnet::detail
