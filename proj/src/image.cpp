#include "ropnet/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace ropnet {
namespace {

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) raise(ErrorKind::Io, "cannot open '" + path + "' for reading");
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (!f.good() && !f.eof()) raise(ErrorKind::Io, "read failed on '" + path + "'");
  return data;
}

bool is_ppm_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

// skip whitespace and '#' comments, then parse one decimal field
int64_t ppm_int(const std::string& d, size_t& pos, const std::string& path, const char* what) {
  for (;;) {
    while (pos < d.size() && is_ppm_space(d[pos])) ++pos;
    if (pos < d.size() && d[pos] == '#') {
      while (pos < d.size() && d[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  if (pos >= d.size() || d[pos] < '0' || d[pos] > '9') {
    raise(ErrorKind::Format, "'" + path + "': expected " + std::string(what) + " at byte " +
                                 std::to_string(pos));
  }
  int64_t v = 0;
  while (pos < d.size() && d[pos] >= '0' && d[pos] <= '9') {
    v = v * 10 + (d[pos] - '0');
    if (v > (int64_t(1) << 31)) raise(ErrorKind::Format, "'" + path + "': absurd " + what);
    ++pos;
  }
  return v;
}

void require_rank3(const TensorT<float>& t, const char* who) {
  if (t.rank() != 3) {
    raise(ErrorKind::Shape, std::string(who) + " wants a [H,W,C] tensor, got rank " +
                                std::to_string(t.rank()));
  }
}

}  // namespace

RawImage load_ppm(const std::string& path) {
  const std::string d = read_file(path);
  if (d.size() < 2 || d[0] != 'P' || d[1] != '6') {
    raise(ErrorKind::Format, "'" + path + "': not a binary PPM (P6) file");
  }
  size_t pos = 2;
  const int64_t w = ppm_int(d, pos, path, "width");
  const int64_t h = ppm_int(d, pos, path, "height");
  const int64_t maxval = ppm_int(d, pos, path, "maxval");
  if (w <= 0 || h <= 0) raise(ErrorKind::Format, "'" + path + "': non-positive dimensions");
  if (maxval != 255) {
    raise(ErrorKind::Format, "'" + path + "': maxval " + std::to_string(maxval) +
                                 " unsupported (must be 255)");
  }
  if (pos >= d.size() || !is_ppm_space(d[pos])) {
    raise(ErrorKind::Format, "'" + path + "': missing whitespace after maxval");
  }
  ++pos;  // exactly one separator byte before the payload
  const size_t need = static_cast<size_t>(w) * static_cast<size_t>(h) * 3;
  if (d.size() - pos < need) {
    raise(ErrorKind::Format, "'" + path + "': truncated payload, need " + std::to_string(need) +
                                 " bytes, have " + std::to_string(d.size() - pos));
  }
  RawImage img;
  img.height = h;
  img.width = w;
  img.pixels.assign(d.begin() + static_cast<std::ptrdiff_t>(pos),
                    d.begin() + static_cast<std::ptrdiff_t>(pos + need));
  return img;
}

void save_ppm(const RawImage& img, const std::string& path) {
  if (img.height <= 0 || img.width <= 0 ||
      img.pixels.size() != static_cast<size_t>(img.height * img.width * 3)) {
    raise(ErrorKind::Shape, "malformed RawImage for '" + path + "'");
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) raise(ErrorKind::Io, "cannot open '" + path + "' for writing");
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (!f.good()) raise(ErrorKind::Io, "write failed on '" + path + "'");
}

Tensor normalize(const RawImage& img) {
  Tensor t({img.height, img.width, 3});
  const float scale = 1.0f / 255.0f;
  for (int64_t i = 0; i < t.numel(); ++i) {
    t[i] = static_cast<float>(img.pixels[static_cast<size_t>(i)]) * scale;
  }
  return t;
}

RawImage to_raw(const Tensor& t) {
  require_rank3(t, "to_raw");
  if (t.extent(2) != 3) raise(ErrorKind::Shape, "to_raw wants 3 channels");
  RawImage img;
  img.height = t.extent(0);
  img.width = t.extent(1);
  img.pixels.resize(static_cast<size_t>(t.numel()));
  for (int64_t i = 0; i < t.numel(); ++i) {
    const long v = std::lroundf(t[i] * 255.0f);
    img.pixels[static_cast<size_t>(i)] = static_cast<uint8_t>(std::clamp(v, 0L, 255L));
  }
  return img;
}

Tensor resize_bilinear(const Tensor& t, int64_t out_h, int64_t out_w) {
  require_rank3(t, "resize_bilinear");
  if (out_h <= 0 || out_w <= 0) {
    raise(ErrorKind::Parameter, "resize target must be positive, got " + std::to_string(out_h) +
                                    "x" + std::to_string(out_w));
  }
  const int64_t ih = t.extent(0), iw = t.extent(1), c = t.extent(2);
  Tensor out({out_h, out_w, c});
  const double sy = static_cast<double>(ih) / static_cast<double>(out_h);
  const double sx = static_cast<double>(iw) / static_cast<double>(out_w);
  for (int64_t i = 0; i < out_h; ++i) {
    const double y = std::clamp((i + 0.5) * sy - 0.5, 0.0, static_cast<double>(ih - 1));
    const int64_t y0 = static_cast<int64_t>(y);
    const int64_t y1 = std::min(y0 + 1, ih - 1);
    const double fy = y - static_cast<double>(y0);
    for (int64_t j = 0; j < out_w; ++j) {
      const double x = std::clamp((j + 0.5) * sx - 0.5, 0.0, static_cast<double>(iw - 1));
      const int64_t x0 = static_cast<int64_t>(x);
      const int64_t x1 = std::min(x0 + 1, iw - 1);
      const double fx = x - static_cast<double>(x0);
      const float* r0 = t.data() + (y0 * iw + x0) * c;
      const float* r1 = t.data() + (y0 * iw + x1) * c;
      const float* r2 = t.data() + (y1 * iw + x0) * c;
      const float* r3 = t.data() + (y1 * iw + x1) * c;
      float* o = out.data() + (i * out_w + j) * c;
      for (int64_t k = 0; k < c; ++k) {
        const double top = r0[k] * (1.0 - fx) + r1[k] * fx;
        const double bot = r2[k] * (1.0 - fx) + r3[k] * fx;
        o[k] = static_cast<float>(top * (1.0 - fy) + bot * fy);
      }
    }
  }
  return out;
}

const char* aug_op_name(AugOp op) {
  switch (op) {
    case AugOp::Rot90: return "rot90";
    case AugOp::Rot180: return "rot180";
    case AugOp::Rot270: return "rot270";
    case AugOp::FlipH: return "flip_h";
    case AugOp::FlipV: return "flip_v";
    case AugOp::FlipHRot90: return "flip_h_rot90";
    case AugOp::Contrast: return "contrast";
  }
  raise(ErrorKind::Parameter, "unknown augmentation op");
}

AugOp aug_op_from(const std::string& name) {
  for (AugOp op : {AugOp::Rot90, AugOp::Rot180, AugOp::Rot270, AugOp::FlipH, AugOp::FlipV,
                   AugOp::FlipHRot90, AugOp::Contrast}) {
    if (name == aug_op_name(op)) return op;
  }
  raise(ErrorKind::Parameter, "unknown augmentation op '" + name + "'");
}

std::vector<AugOp> parse_aug_ops(const std::string& comma_list) {
  std::vector<AugOp> ops;
  size_t start = 0;
  while (start <= comma_list.size()) {
    size_t end = comma_list.find(',', start);
    if (end == std::string::npos) end = comma_list.size();
    const std::string item = comma_list.substr(start, end - start);
    if (!item.empty()) ops.push_back(aug_op_from(item));
    start = end + 1;
  }
  if (ops.empty()) raise(ErrorKind::Parameter, "no augmentation ops given");
  return ops;
}

namespace {

// index remappers; out(i,j) <- in(map(i,j))
Tensor rot90_cw(const Tensor& t) {
  const int64_t h = t.extent(0), w = t.extent(1), c = t.extent(2);
  Tensor out({w, h, c});
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      std::copy_n(t.data() + (i * w + j) * c, c, out.data() + (j * h + (h - 1 - i)) * c);
    }
  }
  return out;
}

Tensor flip_cols(const Tensor& t) {
  const int64_t h = t.extent(0), w = t.extent(1), c = t.extent(2);
  Tensor out(t.shape());
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      std::copy_n(t.data() + (i * w + j) * c, c, out.data() + (i * w + (w - 1 - j)) * c);
    }
  }
  return out;
}

Tensor flip_rows(const Tensor& t) {
  const int64_t h = t.extent(0), w = t.extent(1), c = t.extent(2);
  Tensor out(t.shape());
  for (int64_t i = 0; i < h; ++i) {
    std::copy_n(t.data() + i * w * c, w * c, out.data() + (h - 1 - i) * w * c);
  }
  return out;
}

Tensor stretch_contrast(const Tensor& t) {
  const int64_t h = t.extent(0), w = t.extent(1), c = t.extent(2);
  const int64_t n = h * w;
  Tensor out = t;
  std::vector<float> sorted(static_cast<size_t>(n));
  for (int64_t k = 0; k < c; ++k) {
    for (int64_t p = 0; p < n; ++p) sorted[static_cast<size_t>(p)] = t[p * c + k];
    std::sort(sorted.begin(), sorted.end());
    const auto rank = [&](double q) {
      return sorted[static_cast<size_t>(std::llround(q * static_cast<double>(n - 1)))];
    };
    const float lo = rank(0.02), hi = rank(0.98);
    if (hi <= lo) continue;  // flat channel: nothing to stretch
    const float inv = 1.0f / (hi - lo);
    for (int64_t p = 0; p < n; ++p) {
      out[p * c + k] = std::clamp((t[p * c + k] - lo) * inv, 0.0f, 1.0f);
    }
  }
  return out;
}

}  // namespace

Tensor augment(const Tensor& t, AugOp op) {
  require_rank3(t, "augment");
  switch (op) {
    case AugOp::Rot90: return rot90_cw(t);
    case AugOp::Rot180: return flip_rows(flip_cols(t));
    case AugOp::Rot270: return rot90_cw(rot90_cw(rot90_cw(t)));
    case AugOp::FlipH: return flip_cols(t);
    case AugOp::FlipV: return flip_rows(t);
    case AugOp::FlipHRot90: return rot90_cw(flip_cols(t));
    case AugOp::Contrast: return stretch_contrast(t);
  }
  raise(ErrorKind::Parameter, "unknown augmentation op");
}

}  // namespace ropnet
