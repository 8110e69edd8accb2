#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ropnet/tensor.hpp"

namespace ropnet {

// 8-bit RGB image as stored on disk (binary PPM P6, maxval 255)
struct RawImage {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<uint8_t> pixels;  // height*width*3, row-major RGB
};

RawImage load_ppm(const std::string& path);
void save_ppm(const RawImage& img, const std::string& path);

// v -> v/255 into a [H,W,3] tensor; to_raw rounds back with clamping, so a
// roundtrip moves each value by at most 1/510
Tensor normalize(const RawImage& img);
RawImage to_raw(const Tensor& t);

// output sample i reads input position (i+0.5)*in/out - 0.5, clamped
Tensor resize_bilinear(const Tensor& t, int64_t out_h, int64_t out_w);

// rot90 is clockwise; flip_h mirrors columns, flip_v mirrors rows;
// flip_h_rot90 = rot90 after flip_h; contrast is a per-channel linear
// stretch of the 2nd..98th percentile range onto [0,1]
enum class AugOp { Rot90, Rot180, Rot270, FlipH, FlipV, FlipHRot90, Contrast };

const char* aug_op_name(AugOp op);
AugOp aug_op_from(const std::string& name);
std::vector<AugOp> parse_aug_ops(const std::string& comma_list);

Tensor augment(const Tensor& t, AugOp op);

}  // namespace ropnet
