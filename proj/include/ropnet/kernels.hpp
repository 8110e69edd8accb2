#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

// Numeric kernels with runtime backend selection. Every kernel has a scalar
// reference implementation; AVX2 (x86-64) and NEON (aarch64) variants mirror
// the scalar per-element accumulation order lane for lane, so all backends
// produce bitwise-identical outputs. Backend choice therefore never affects
// results, only speed.
namespace ropnet::kern {

enum class Backend { Scalar, Avx2, Neon };

const char* backend_name(Backend b);
bool backend_available(Backend b);
std::vector<Backend> available_backends();
Backend active_backend();
// Throws a Capability error if the backend was not compiled in or the CPU
// lacks it. Honors ROPNET_BACKEND=scalar|avx2|neon for the initial pick.
void set_backend(Backend b);

int threads();
void set_threads(int n);  // n >= 1; kernels may split row ranges across threads

// Geometry of one 2-D convolution. Tensors are NHWC; weights are
// [kh, kw, cin, cout] (or [kh, kw, c] for the depthwise case, cin == cout).
struct Conv2dGeom {
  int64_t n = 0, in_h = 0, in_w = 0, cin = 0;
  int64_t kh = 0, kw = 0, cout = 0;
  int64_t stride = 1, pad_top = 0, pad_left = 0;
  int64_t out_h = 0, out_w = 0;
};

// y[n,oh,ow,co] = sum over kh -> kw -> ci of x*w (fixed accumulation order)
template <typename T>
void conv2d(const T* x, const T* w, T* y, const Conv2dGeom& g);

// dx from dy; wt is weights transposed to [kh, kw, cout, cin].
// Per dx element the accumulation order is kh -> kw -> co.
template <typename T>
void conv2d_bwd_input(const T* dy, const T* wt, T* dx, const Conv2dGeom& g);

// dw[kh,kw,ci,co] accumulated over n -> oh -> ow.
template <typename T>
void conv2d_bwd_weights(const T* x, const T* dy, T* dw, const Conv2dGeom& g);

template <typename T>
void depthwise2d(const T* x, const T* w, T* y, const Conv2dGeom& g);

template <typename T>
void depthwise2d_bwd_input(const T* dy, const T* w, T* dx, const Conv2dGeom& g);

template <typename T>
void depthwise2d_bwd_weights(const T* x, const T* dy, T* dw, const Conv2dGeom& g);

// c[m,n] = sum_k a[m,k] * b[k,n], k ascending per output element
template <typename T>
void matmul(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n);

template <typename T>
void relu(const T* x, T* y, int64_t n);

// Splits [0, n) into contiguous chunks across the configured worker count and
// invokes fn(begin, end) for each. Serial when threads() == 1.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

}  // namespace ropnet::kern
