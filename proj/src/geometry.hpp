#pragma once

#include <vector>

#include "ropnet/error.hpp"
#include "ropnet/kernels.hpp"
#include "ropnet/tensor.hpp"

namespace ropnet::detail {

// Output extents and padding for an NHWC convolution.
//   same:  out = ceil(in / stride), pad split with the extra row/col on the
//          bottom/right edge (pad_top = pad_total / 2, floored)
//   valid: out = floor((in - k) / stride) + 1, no padding
inline kern::Conv2dGeom conv_geom(const std::vector<int64_t>& x_shape, int64_t kh, int64_t kw,
                                  int64_t cout, int64_t stride, Padding padding) {
  if (stride != 1 && stride != 2) {
    raise(ErrorKind::Parameter, "conv stride must be 1 or 2, got " + std::to_string(stride));
  }
  kern::Conv2dGeom g;
  g.n = x_shape[0];
  g.in_h = x_shape[1];
  g.in_w = x_shape[2];
  g.cin = x_shape[3];
  g.kh = kh;
  g.kw = kw;
  g.cout = cout;
  g.stride = stride;
  if (padding == Padding::Same) {
    g.out_h = (g.in_h + stride - 1) / stride;
    g.out_w = (g.in_w + stride - 1) / stride;
    const int64_t pad_h = std::max<int64_t>(0, (g.out_h - 1) * stride + kh - g.in_h);
    const int64_t pad_w = std::max<int64_t>(0, (g.out_w - 1) * stride + kw - g.in_w);
    g.pad_top = pad_h / 2;
    g.pad_left = pad_w / 2;
  } else {
    if (g.in_h < kh || g.in_w < kw) {
      raise(ErrorKind::Shape, "valid-padding conv needs input >= kernel, got input " +
                                  std::to_string(g.in_h) + "x" + std::to_string(g.in_w) +
                                  " kernel " + std::to_string(kh) + "x" + std::to_string(kw));
    }
    g.out_h = (g.in_h - kh) / stride + 1;
    g.out_w = (g.in_w - kw) / stride + 1;
    g.pad_top = 0;
    g.pad_left = 0;
  }
  return g;
}

}  // namespace ropnet::detail
