#pragma once

#include <cmath>
#include <cstdint>

namespace ropnet::detail {

// Branch on sign so exp never overflows; shared by the eager op and the
// planned executor so the two engines agree bitwise.
template <typename T>
inline void sigmoid_span(const T* x, T* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) {
    const T v = x[i];
    if (v >= T(0)) {
      const T e = std::exp(-v);
      y[i] = T(1) / (T(1) + e);
    } else {
      const T e = std::exp(v);
      y[i] = e / (T(1) + e);
    }
  }
}

}  // namespace ropnet::detail
