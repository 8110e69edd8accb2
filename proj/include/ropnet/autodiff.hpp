#pragma once

#include <functional>
#include <map>
#include <string>

#include "ropnet/model.hpp"
#include "ropnet/tensor.hpp"

namespace ropnet {

// One recorded layer application. Only what backward needs is saved: the
// layer input for conv/dense/relu/batch-norm, the output for sigmoid, and the
// batch statistics for batch norm.
template <typename T>
struct TapeNodeT {
  LayerKind kind = LayerKind::Relu;
  int64_t layer = 0;
  TensorT<T> x;
  TensorT<T> y;
  TensorT<T> bn_mean;
  TensorT<T> bn_invstd;
  std::vector<int64_t> in_shape;
};

// Reverse-mode record of one forward pass. Nodes are appended in execution
// order, so walking them back-to-front is reverse topological order. The tape
// borrows spec/params; it is only valid until either is mutated (i.e. consume
// it before the optimizer step).
template <typename T>
struct TapeT {
  const ModelSpec* spec = nullptr;
  ParametersT<T>* params = nullptr;
  TensorT<T> input;
  std::vector<TapeNodeT<T>> nodes;
  TensorT<T> output;
};

using Tape = TapeT<float>;

// gradient of the loss w.r.t. the input batch, keyed alongside parameters
inline constexpr const char* kInputGradName = "__input__";

template <typename T>
struct GradientSetT {
  std::map<std::string, TensorT<T>> grads;
};

using GradientSet = GradientSetT<float>;

// Train-mode forward that records a tape. Output is bitwise identical to
// forward(spec, params, input, Train).
template <typename T>
TensorT<T> forward_record(const ModelSpec& spec, ParametersT<T>& params, const TensorT<T>& input,
                          TapeT<T>& tape);

// Chain rule in reverse node order; every trainable parameter of the taped
// model appears exactly once, plus the input gradient under kInputGradName.
template <typename T>
GradientSetT<T> backward(const TapeT<T>& tape, const TensorT<T>& seed);

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  bool ok = false;
};

// Central-difference verification of an analytic gradient set. Evaluates
// f(θ ± h·e) per coordinate; tensors with more than 128 elements are spot
// checked on 128 distinct seeded-random coordinates. Relative error uses
// denominator max(|analytic|, |numeric|, 1e-8). Non-finite f -> numeric error.
GradCheckReport grad_check(const std::function<double(ParametersT<double>&)>& f,
                           ParametersT<double>& params, const GradientSetT<double>& analytic,
                           double h, double tolerance, uint64_t seed = 1234);

}  // namespace ropnet
