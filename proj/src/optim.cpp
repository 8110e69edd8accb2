#include "ropnet/optim.hpp"

#include <cmath>

namespace ropnet {

template <typename T>
AdamT<T>::AdamT(AdamConfig cfg) : cfg_(cfg) {
  if (cfg_.lr <= 0.0 || cfg_.beta1 < 0.0 || cfg_.beta1 >= 1.0 || cfg_.beta2 < 0.0 ||
      cfg_.beta2 >= 1.0 || cfg_.eps <= 0.0) {
    raise(ErrorKind::Parameter, "bad Adam hyperparameters");
  }
}

template <typename T>
void AdamT<T>::step(ParametersT<T>& params, const GradientSetT<T>& grads) {
  // validate everything before touching any state: a refused step must leave
  // params, moments and the step counter untouched
  for (const auto& [name, g] : grads.grads) {
    if (name == kInputGradName || !is_trainable_param(name)) continue;
    const TensorT<T>& p = params.at(name);
    if (!g.same_shape(p)) {
      raise(ErrorKind::Shape, "gradient shape mismatch for '" + name + "'");
    }
    for (int64_t i = 0; i < g.numel(); ++i) {
      if (!std::isfinite(static_cast<double>(g[i]))) {
        raise(ErrorKind::Numeric, "non-finite gradient for '" + name + "', step refused");
      }
    }
  }

  ++t_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (const auto& [name, g] : grads.grads) {
    if (name == kInputGradName || !is_trainable_param(name)) continue;
    TensorT<T>& p = params.at(name);
    auto mit = m_.find(name);
    if (mit == m_.end()) {
      mit = m_.emplace(name, TensorT<T>(p.shape())).first;
      v_.emplace(name, TensorT<T>(p.shape()));
    }
    TensorT<T>& m = mit->second;
    TensorT<T>& v = v_.at(name);
    for (int64_t i = 0; i < p.numel(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * gi;
      const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      p[i] = static_cast<T>(static_cast<double>(p[i]) - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
  }
}

template class AdamT<float>;
template class AdamT<double>;

}  // namespace ropnet
