#pragma once

#include "ropnet/tensor.hpp"

namespace ropnet {

inline constexpr double kBceClamp = 1e-7;

// Mean over the batch of -[y*ln(yc) + (1-y)*ln(1-yc)] with
// yc = clamp(yhat, 1e-7, 1 - 1e-7). Labels must be exactly 0 or 1.
template <typename T>
double bce_loss(const TensorT<T>& y, const TensorT<T>& yhat);

// d loss / d yhat; zero where the clamp is active.
template <typename T>
TensorT<T> bce_grad(const TensorT<T>& y, const TensorT<T>& yhat);

}  // namespace ropnet
