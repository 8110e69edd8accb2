#include "ropnet/tensor.hpp"

#include <cmath>
#include <string>

#include "geometry.hpp"
#include "ropnet/kernels.hpp"
#include "scalar_ops.hpp"

namespace ropnet {
namespace {

std::string shape_str(const std::vector<int64_t>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

template <typename T>
void require_rank(const TensorT<T>& t, int64_t rank, const char* what) {
  if (t.rank() != rank) {
    raise(ErrorKind::Shape, std::string(what) + " must have rank " + std::to_string(rank) +
                                ", got shape " + shape_str(t.shape()));
  }
}

void check_conv_cfg(const ConvConfig& cfg, int64_t kh, int64_t kw, int64_t cout) {
  if (cfg.kernel_h != kh || cfg.kernel_w != kw) {
    raise(ErrorKind::Parameter,
          "conv config kernel " + std::to_string(cfg.kernel_h) + "x" + std::to_string(cfg.kernel_w) +
              " does not match weight kernel " + std::to_string(kh) + "x" + std::to_string(kw));
  }
  if (cfg.out_channels != 0 && cfg.out_channels != cout) {
    raise(ErrorKind::Parameter, "conv config out_channels " + std::to_string(cfg.out_channels) +
                                    " does not match weight out channels " + std::to_string(cout));
  }
}

}  // namespace

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  require_rank(a, 2, "matmul lhs");
  require_rank(b, 2, "matmul rhs");
  if (a.extent(1) != b.extent(0)) {
    raise(ErrorKind::Shape, "matmul inner extents differ: " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  }
  TensorT<T> c({a.extent(0), b.extent(1)});
  kern::matmul(a.data(), b.data(), c.data(), a.extent(0), a.extent(1), b.extent(1));
  return c;
}

template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& weights, const ConvConfig& cfg) {
  require_rank(input, 4, "conv input");
  require_rank(weights, 4, "conv weights");
  check_conv_cfg(cfg, weights.extent(0), weights.extent(1), weights.extent(3));
  if (input.extent(3) != weights.extent(2)) {
    raise(ErrorKind::Shape, "conv input channels " + std::to_string(input.extent(3)) +
                                " do not match weight in channels " +
                                std::to_string(weights.extent(2)));
  }
  const kern::Conv2dGeom g = detail::conv_geom(input.shape(), weights.extent(0), weights.extent(1),
                                               weights.extent(3), cfg.stride, cfg.padding);
  TensorT<T> y({g.n, g.out_h, g.out_w, g.cout});
  kern::conv2d(input.data(), weights.data(), y.data(), g);
  return y;
}

template <typename T>
TensorT<T> depthwise_conv2d(const TensorT<T>& input, const TensorT<T>& weights,
                            const ConvConfig& cfg) {
  require_rank(input, 4, "depthwise conv input");
  require_rank(weights, 3, "depthwise conv weights");
  if (cfg.kernel_h != weights.extent(0) || cfg.kernel_w != weights.extent(1)) {
    raise(ErrorKind::Parameter, "depthwise config kernel does not match weight kernel");
  }
  if (input.extent(3) != weights.extent(2)) {
    raise(ErrorKind::Shape, "depthwise input channels " + std::to_string(input.extent(3)) +
                                " do not match weight channels " +
                                std::to_string(weights.extent(2)));
  }
  const kern::Conv2dGeom g = detail::conv_geom(input.shape(), weights.extent(0), weights.extent(1),
                                               input.extent(3), cfg.stride, cfg.padding);
  TensorT<T> y({g.n, g.out_h, g.out_w, g.cin});
  kern::depthwise2d(input.data(), weights.data(), y.data(), g);
  return y;
}

template <typename T>
TensorT<T> relu(const TensorT<T>& x) {
  TensorT<T> y(x.shape());
  kern::relu(x.data(), y.data(), x.numel());
  return y;
}

template <typename T>
TensorT<T> sigmoid(const TensorT<T>& x) {
  TensorT<T> y(x.shape());
  detail::sigmoid_span(x.data(), y.data(), x.numel());
  return y;
}

template <typename T>
TensorT<T> flatten(const TensorT<T>& x) {
  if (x.rank() < 2) {
    raise(ErrorKind::Shape, "flatten needs rank >= 2, got shape " + shape_str(x.shape()));
  }
  int64_t rest = 1;
  for (int64_t a = 1; a < x.rank(); ++a) rest *= x.extent(a);
  return x.reshaped({x.extent(0), rest});
}

template <typename T>
BatchNormResult<T> batch_norm_forward(const TensorT<T>& x, const TensorT<T>& gamma,
                                      const TensorT<T>& beta, TensorT<T>& running_mean,
                                      TensorT<T>& running_var, BatchNormMode mode, double momentum,
                                      double eps) {
  require_rank(x, 4, "batch norm input");
  const int64_t c = x.extent(3);
  const TensorT<T>* per_channel[] = {&gamma, &beta, &running_mean, &running_var};
  for (const TensorT<T>* p : per_channel) {
    if (p->rank() != 1 || p->extent(0) != c) {
      raise(ErrorKind::Shape, "batch norm parameters must have shape [" + std::to_string(c) +
                                  "], got " + shape_str(p->shape()));
    }
  }
  if (eps <= 0.0) raise(ErrorKind::Parameter, "batch norm eps must be > 0");
  if (momentum < 0.0 || momentum > 1.0) {
    raise(ErrorKind::Parameter, "batch norm momentum must be in [0, 1]");
  }

  const int64_t rows = x.numel() / c;
  BatchNormResult<T> out;
  out.y = TensorT<T>(x.shape());
  TensorT<T> mean({c});
  TensorT<T> invstd({c});

  if (mode == BatchNormMode::Train) {
    // Statistics accumulate in double regardless of T so that the f32 path
    // stays accurate for large N*H*W.
    std::vector<double> sum(static_cast<size_t>(c), 0.0);
    const T* xp = x.data();
    for (int64_t r = 0; r < rows; ++r) {
      const T* row = xp + r * c;
      for (int64_t ch = 0; ch < c; ++ch) sum[static_cast<size_t>(ch)] += static_cast<double>(row[ch]);
    }
    std::vector<double> mu(static_cast<size_t>(c));
    for (int64_t ch = 0; ch < c; ++ch) mu[static_cast<size_t>(ch)] = sum[static_cast<size_t>(ch)] / static_cast<double>(rows);
    std::vector<double> ssd(static_cast<size_t>(c), 0.0);
    for (int64_t r = 0; r < rows; ++r) {
      const T* row = xp + r * c;
      for (int64_t ch = 0; ch < c; ++ch) {
        const double d = static_cast<double>(row[ch]) - mu[static_cast<size_t>(ch)];
        ssd[static_cast<size_t>(ch)] += d * d;
      }
    }
    for (int64_t ch = 0; ch < c; ++ch) {
      const double var = ssd[static_cast<size_t>(ch)] / static_cast<double>(rows);  // biased
      mean[ch] = static_cast<T>(mu[static_cast<size_t>(ch)]);
      invstd[ch] = static_cast<T>(1.0 / std::sqrt(var + eps));
      running_mean[ch] = static_cast<T>((1.0 - momentum) * static_cast<double>(running_mean[ch]) +
                                        momentum * mu[static_cast<size_t>(ch)]);
      running_var[ch] = static_cast<T>((1.0 - momentum) * static_cast<double>(running_var[ch]) +
                                       momentum * var);
    }
  } else {
    for (int64_t ch = 0; ch < c; ++ch) {
      mean[ch] = running_mean[ch];
      invstd[ch] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var[ch]) + eps));
    }
  }

  const T* xp = x.data();
  T* yp = out.y.data();
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = xp + r * c;
    T* yr = yp + r * c;
    for (int64_t ch = 0; ch < c; ++ch) {
      const T xhat = (xr[ch] - mean[ch]) * invstd[ch];
      yr[ch] = gamma[ch] * xhat + beta[ch];
    }
  }

  if (mode == BatchNormMode::Train) {
    out.batch_mean = std::move(mean);
    out.batch_invstd = std::move(invstd);
  }
  return out;
}

template <typename T>
TensorT<T> batch_norm(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                      TensorT<T>& running_mean, TensorT<T>& running_var, BatchNormMode mode,
                      double momentum, double eps) {
  return batch_norm_forward(x, gamma, beta, running_mean, running_var, mode, momentum, eps).y;
}

#define ROPNET_INSTANTIATE(T)                                                                    \
  template TensorT<T> matmul<T>(const TensorT<T>&, const TensorT<T>&);                           \
  template TensorT<T> conv2d<T>(const TensorT<T>&, const TensorT<T>&, const ConvConfig&);        \
  template TensorT<T> depthwise_conv2d<T>(const TensorT<T>&, const TensorT<T>&,                  \
                                          const ConvConfig&);                                    \
  template TensorT<T> relu<T>(const TensorT<T>&);                                                \
  template TensorT<T> sigmoid<T>(const TensorT<T>&);                                             \
  template TensorT<T> flatten<T>(const TensorT<T>&);                                             \
  template BatchNormResult<T> batch_norm_forward<T>(const TensorT<T>&, const TensorT<T>&,        \
                                                    const TensorT<T>&, TensorT<T>&, TensorT<T>&, \
                                                    BatchNormMode, double, double);              \
  template TensorT<T> batch_norm<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&,     \
                                    TensorT<T>&, TensorT<T>&, BatchNormMode, double, double);

ROPNET_INSTANTIATE(float)
ROPNET_INSTANTIATE(double)

#undef ROPNET_INSTANTIATE

}  // namespace ropnet
