#include "kernels_internal.hpp"

namespace ropnet::kern {

const KernelTable<float>& scalar_table_f32() {
  static const KernelTable<float> t = detail::make_scalar_table<float>();
  return t;
}

const KernelTable<double>& scalar_table_f64() {
  static const KernelTable<double> t = detail::make_scalar_table<double>();
  return t;
}

}  // namespace ropnet::kern
