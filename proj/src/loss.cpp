#include "ropnet/loss.hpp"

#include <algorithm>
#include <cmath>

namespace ropnet {
namespace {

template <typename T>
void check_pair(const TensorT<T>& y, const TensorT<T>& yhat) {
  if (!y.same_shape(yhat)) {
    raise(ErrorKind::Shape, "labels and predictions must have the same shape");
  }
  for (int64_t i = 0; i < y.numel(); ++i) {
    if (y[i] != T(0) && y[i] != T(1)) {
      raise(ErrorKind::Validation, "labels must be exactly 0 or 1");
    }
  }
}

}  // namespace

template <typename T>
double bce_loss(const TensorT<T>& y, const TensorT<T>& yhat) {
  check_pair(y, yhat);
  const double lo = kBceClamp, hi = 1.0 - kBceClamp;
  double acc = 0.0;
  for (int64_t i = 0; i < y.numel(); ++i) {
    const double t = static_cast<double>(y[i]);
    const double p = std::clamp(static_cast<double>(yhat[i]), lo, hi);
    acc += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
  }
  return acc / static_cast<double>(y.numel());
}

template <typename T>
TensorT<T> bce_grad(const TensorT<T>& y, const TensorT<T>& yhat) {
  check_pair(y, yhat);
  const double lo = kBceClamp, hi = 1.0 - kBceClamp;
  const double n = static_cast<double>(y.numel());
  TensorT<T> g(y.shape());
  for (int64_t i = 0; i < y.numel(); ++i) {
    const double raw = static_cast<double>(yhat[i]);
    if (raw < lo || raw > hi) {
      g[i] = T(0);  // clamp plateau
      continue;
    }
    const double t = static_cast<double>(y[i]);
    g[i] = static_cast<T>((raw - t) / (raw * (1.0 - raw)) / n);
  }
  return g;
}

template double bce_loss<float>(const TensorT<float>&, const TensorT<float>&);
template double bce_loss<double>(const TensorT<double>&, const TensorT<double>&);
template TensorT<float> bce_grad<float>(const TensorT<float>&, const TensorT<float>&);
template TensorT<double> bce_grad<double>(const TensorT<double>&, const TensorT<double>&);

}  // namespace ropnet
