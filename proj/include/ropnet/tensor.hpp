#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "ropnet/error.hpp"

namespace ropnet {

// Dense row-major N-dimensional array. Image batches are NHWC.
template <typename T>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(static_cast<size_t>(numel_), T(0));
  }

  TensorT(std::vector<int64_t> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    if (static_cast<int64_t>(data_.size()) != numel_) {
      raise(ErrorKind::Shape, "tensor data length " + std::to_string(data_.size()) +
                                  " does not match shape product " + std::to_string(numel_));
    }
  }

  static TensorT full(std::vector<int64_t> shape, T value) {
    TensorT t(std::move(shape));
    for (auto& v : t.data_) v = value;
    return t;
  }

  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  int64_t numel() const { return numel_; }
  int64_t extent(int64_t axis) const { return shape_.at(static_cast<size_t>(axis)); }
  bool empty() const { return numel_ == 0; }
  bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  T operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }
  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }

  T at(std::initializer_list<int64_t> idx) const { return data_[flat(idx)]; }
  T& at(std::initializer_list<int64_t> idx) { return data_[flat(idx)]; }

  // same storage, new shape; element count must be preserved
  TensorT reshaped(std::vector<int64_t> new_shape) const {
    TensorT out(std::move(new_shape), data_);
    return out;
  }

  template <typename U>
  TensorT<U> cast() const {
    std::vector<U> d(data_.size());
    for (size_t i = 0; i < data_.size(); ++i) d[i] = static_cast<U>(data_[i]);
    return TensorT<U>(shape_, std::move(d));
  }

 private:
  void validate_shape() {
    if (shape_.empty()) raise(ErrorKind::Shape, "tensor rank must be >= 1");
    numel_ = 1;
    for (int64_t e : shape_) {
      if (e < 1) raise(ErrorKind::Shape, "tensor extents must be >= 1");
      numel_ *= e;
    }
  }

  size_t flat(std::initializer_list<int64_t> idx) const {
    int64_t off = 0;
    size_t axis = 0;
    for (int64_t i : idx) {
      off = off * shape_[axis] + i;
      ++axis;
    }
    return static_cast<size_t>(off);
  }

  std::vector<int64_t> shape_;
  std::vector<T> data_;
  int64_t numel_ = 0;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

enum class Padding { Same, Valid };

struct ConvConfig {
  int64_t kernel_h = 3;
  int64_t kernel_w = 3;
  int64_t stride = 1;  // the architecture only uses 1 and 2
  Padding padding = Padding::Same;
  int64_t out_channels = 0;
};

enum class BatchNormMode { Train, Infer };

// -- tensor_core operations ------------------------------------------------

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b);

template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& weights, const ConvConfig& cfg);

template <typename T>
TensorT<T> depthwise_conv2d(const TensorT<T>& input, const TensorT<T>& weights,
                            const ConvConfig& cfg);

template <typename T>
TensorT<T> relu(const TensorT<T>& x);

template <typename T>
TensorT<T> sigmoid(const TensorT<T>& x);

template <typename T>
TensorT<T> flatten(const TensorT<T>& x);  // [N,H,W,C] -> [N, H*W*C]

template <typename T>
struct BatchNormResult {
  TensorT<T> y;
  TensorT<T> batch_mean;    // per channel, train mode only
  TensorT<T> batch_invstd;  // 1/sqrt(var + eps), train mode only
};

// Train mode normalizes by per-channel batch statistics over N,H,W (biased
// variance) and updates the running stats in place; infer mode reads the
// running stats and leaves them untouched.
template <typename T>
BatchNormResult<T> batch_norm_forward(const TensorT<T>& x, const TensorT<T>& gamma,
                                      const TensorT<T>& beta, TensorT<T>& running_mean,
                                      TensorT<T>& running_var, BatchNormMode mode,
                                      double momentum = 0.1, double eps = 1e-5);

template <typename T>
TensorT<T> batch_norm(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                      TensorT<T>& running_mean, TensorT<T>& running_var, BatchNormMode mode,
                      double momentum = 0.1, double eps = 1e-5);

}  // namespace ropnet
