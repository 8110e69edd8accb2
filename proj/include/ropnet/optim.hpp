#pragma once

#include <cstdint>
#include <map>

#include "ropnet/autodiff.hpp"
#include "ropnet/model.hpp"

namespace ropnet {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moment buffers are allocated lazily per
// parameter. A step is all-or-nothing: gradients are checked for finiteness
// up front and a non-finite one refuses the whole step (numeric error) with
// no state mutated.
template <typename T>
class AdamT {
 public:
  explicit AdamT(AdamConfig cfg = {});

  void step(ParametersT<T>& params, const GradientSetT<T>& grads);

  int64_t step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  int64_t t_ = 0;
  std::map<std::string, TensorT<T>> m_;
  std::map<std::string, TensorT<T>> v_;
};

using Adam = AdamT<float>;

}  // namespace ropnet
