#pragma once

#include <algorithm>
#include <vector>

#include "ropnet/kernels.hpp"

// Scalar reference kernels plus the per-backend dispatch table. The scalar
// bodies define the accumulation-order contract; SIMD variants must replicate
// it lane for lane so every backend is bitwise identical.
namespace ropnet::kern {

template <typename T>
struct KernelTable {
  void (*conv2d)(const T*, const T*, T*, const Conv2dGeom&) = nullptr;
  void (*conv2d_bwd_input)(const T*, const T*, T*, const Conv2dGeom&) = nullptr;
  void (*conv2d_bwd_weights)(const T*, const T*, T*, const Conv2dGeom&) = nullptr;
  void (*depthwise2d)(const T*, const T*, T*, const Conv2dGeom&) = nullptr;
  void (*depthwise2d_bwd_input)(const T*, const T*, T*, const Conv2dGeom&) = nullptr;
  void (*depthwise2d_bwd_weights)(const T*, const T*, T*, const Conv2dGeom&) = nullptr;
  void (*matmul)(const T*, const T*, T*, int64_t, int64_t, int64_t) = nullptr;
  void (*relu)(const T*, T*, int64_t) = nullptr;
};

const KernelTable<float>& scalar_table_f32();
const KernelTable<double>& scalar_table_f64();

#if defined(ROPNET_BUILD_AVX2)
const KernelTable<float>& avx2_table_f32();
const KernelTable<double>& avx2_table_f64();
#endif
#if defined(ROPNET_BUILD_NEON)
const KernelTable<float>& neon_table_f32();
const KernelTable<double>& neon_table_f64();
#endif

namespace detail {

// y[n,oh,ow,co]; per output element the accumulation order is kh -> kw -> ci.
template <typename T>
void conv2d_scalar(const T* x, const T* w, T* y, const Conv2dGeom& g) {
  parallel_for(g.n * g.out_h, [&](int64_t r0, int64_t r1) {
    std::vector<T> acc(static_cast<size_t>(g.cout));
    for (int64_t r = r0; r < r1; ++r) {
      const int64_t n = r / g.out_h;
      const int64_t oh = r % g.out_h;
      for (int64_t ow = 0; ow < g.out_w; ++ow) {
        std::fill(acc.begin(), acc.end(), T(0));
        for (int64_t kh = 0; kh < g.kh; ++kh) {
          const int64_t ih = oh * g.stride - g.pad_top + kh;
          if (ih < 0 || ih >= g.in_h) continue;
          for (int64_t kw = 0; kw < g.kw; ++kw) {
            const int64_t iw = ow * g.stride - g.pad_left + kw;
            if (iw < 0 || iw >= g.in_w) continue;
            const T* xp = x + ((n * g.in_h + ih) * g.in_w + iw) * g.cin;
            const T* wp = w + ((kh * g.kw + kw) * g.cin) * g.cout;
            for (int64_t ci = 0; ci < g.cin; ++ci) {
              const T xv = xp[ci];
              const T* wr = wp + ci * g.cout;
              for (int64_t co = 0; co < g.cout; ++co) {
                acc[static_cast<size_t>(co)] += xv * wr[co];
              }
            }
          }
        }
        T* yp = y + ((n * g.out_h + oh) * g.out_w + ow) * g.cout;
        std::copy(acc.begin(), acc.end(), yp);
      }
    }
  });
}

// dx[n,ih,iw,ci]; wt is [kh,kw,cout,cin]; accumulation order kh -> kw -> co.
template <typename T>
void conv2d_bwd_input_scalar(const T* dy, const T* wt, T* dx, const Conv2dGeom& g) {
  parallel_for(g.n * g.in_h, [&](int64_t r0, int64_t r1) {
    std::vector<T> acc(static_cast<size_t>(g.cin));
    for (int64_t r = r0; r < r1; ++r) {
      const int64_t n = r / g.in_h;
      const int64_t ih = r % g.in_h;
      for (int64_t iw = 0; iw < g.in_w; ++iw) {
        std::fill(acc.begin(), acc.end(), T(0));
        for (int64_t kh = 0; kh < g.kh; ++kh) {
          const int64_t oh_num = ih + g.pad_top - kh;
          if (oh_num < 0 || oh_num % g.stride != 0) continue;
          const int64_t oh = oh_num / g.stride;
          if (oh >= g.out_h) continue;
          for (int64_t kw = 0; kw < g.kw; ++kw) {
            const int64_t ow_num = iw + g.pad_left - kw;
            if (ow_num < 0 || ow_num % g.stride != 0) continue;
            const int64_t ow = ow_num / g.stride;
            if (ow >= g.out_w) continue;
            const T* dyp = dy + ((n * g.out_h + oh) * g.out_w + ow) * g.cout;
            const T* wtp = wt + ((kh * g.kw + kw) * g.cout) * g.cin;
            for (int64_t co = 0; co < g.cout; ++co) {
              const T dv = dyp[co];
              const T* wr = wtp + co * g.cin;
              for (int64_t ci = 0; ci < g.cin; ++ci) {
                acc[static_cast<size_t>(ci)] += dv * wr[ci];
              }
            }
          }
        }
        T* dxp = dx + ((n * g.in_h + ih) * g.in_w + iw) * g.cin;
        std::copy(acc.begin(), acc.end(), dxp);
      }
    }
  });
}

// dw[kh,kw,ci,co] zeroed then accumulated over n -> oh -> ow. The (kh,kw)
// slices are disjoint, so work splits across them when threading is on; the
// per-element order is unchanged either way.
template <typename T>
void conv2d_bwd_weights_scalar(const T* x, const T* dy, T* dw, const Conv2dGeom& g) {
  std::fill(dw, dw + g.kh * g.kw * g.cin * g.cout, T(0));
  parallel_for(g.kh * g.kw, [&](int64_t t0, int64_t t1) {
    for (int64_t t = t0; t < t1; ++t) {
      const int64_t kh = t / g.kw;
      const int64_t kw = t % g.kw;
      T* dwp_base = dw + ((kh * g.kw + kw) * g.cin) * g.cout;
      for (int64_t n = 0; n < g.n; ++n) {
        for (int64_t oh = 0; oh < g.out_h; ++oh) {
          const int64_t ih = oh * g.stride - g.pad_top + kh;
          if (ih < 0 || ih >= g.in_h) continue;
          for (int64_t ow = 0; ow < g.out_w; ++ow) {
            const int64_t iw = ow * g.stride - g.pad_left + kw;
            if (iw < 0 || iw >= g.in_w) continue;
            const T* xp = x + ((n * g.in_h + ih) * g.in_w + iw) * g.cin;
            const T* dyp = dy + ((n * g.out_h + oh) * g.out_w + ow) * g.cout;
            for (int64_t ci = 0; ci < g.cin; ++ci) {
              const T xv = xp[ci];
              T* dwp = dwp_base + ci * g.cout;
              for (int64_t co = 0; co < g.cout; ++co) {
                dwp[co] += xv * dyp[co];
              }
            }
          }
        }
      }
    }
  });
}

// w is [kh,kw,c]; channel c only sees its own kernel slice.
template <typename T>
void depthwise2d_scalar(const T* x, const T* w, T* y, const Conv2dGeom& g) {
  const int64_t c = g.cin;
  parallel_for(g.n * g.out_h, [&](int64_t r0, int64_t r1) {
    std::vector<T> acc(static_cast<size_t>(c));
    for (int64_t r = r0; r < r1; ++r) {
      const int64_t n = r / g.out_h;
      const int64_t oh = r % g.out_h;
      for (int64_t ow = 0; ow < g.out_w; ++ow) {
        std::fill(acc.begin(), acc.end(), T(0));
        for (int64_t kh = 0; kh < g.kh; ++kh) {
          const int64_t ih = oh * g.stride - g.pad_top + kh;
          if (ih < 0 || ih >= g.in_h) continue;
          for (int64_t kw = 0; kw < g.kw; ++kw) {
            const int64_t iw = ow * g.stride - g.pad_left + kw;
            if (iw < 0 || iw >= g.in_w) continue;
            const T* xp = x + ((n * g.in_h + ih) * g.in_w + iw) * c;
            const T* wp = w + (kh * g.kw + kw) * c;
            for (int64_t ch = 0; ch < c; ++ch) {
              acc[static_cast<size_t>(ch)] += xp[ch] * wp[ch];
            }
          }
        }
        T* yp = y + ((n * g.out_h + oh) * g.out_w + ow) * c;
        std::copy(acc.begin(), acc.end(), yp);
      }
    }
  });
}

template <typename T>
void depthwise2d_bwd_input_scalar(const T* dy, const T* w, T* dx, const Conv2dGeom& g) {
  const int64_t c = g.cin;
  parallel_for(g.n * g.in_h, [&](int64_t r0, int64_t r1) {
    std::vector<T> acc(static_cast<size_t>(c));
    for (int64_t r = r0; r < r1; ++r) {
      const int64_t n = r / g.in_h;
      const int64_t ih = r % g.in_h;
      for (int64_t iw = 0; iw < g.in_w; ++iw) {
        std::fill(acc.begin(), acc.end(), T(0));
        for (int64_t kh = 0; kh < g.kh; ++kh) {
          const int64_t oh_num = ih + g.pad_top - kh;
          if (oh_num < 0 || oh_num % g.stride != 0) continue;
          const int64_t oh = oh_num / g.stride;
          if (oh >= g.out_h) continue;
          for (int64_t kw = 0; kw < g.kw; ++kw) {
            const int64_t ow_num = iw + g.pad_left - kw;
            if (ow_num < 0 || ow_num % g.stride != 0) continue;
            const int64_t ow = ow_num / g.stride;
            if (ow >= g.out_w) continue;
            const T* dyp = dy + ((n * g.out_h + oh) * g.out_w + ow) * c;
            const T* wp = w + (kh * g.kw + kw) * c;
            for (int64_t ch = 0; ch < c; ++ch) {
              acc[static_cast<size_t>(ch)] += dyp[ch] * wp[ch];
            }
          }
        }
        T* dxp = dx + ((n * g.in_h + ih) * g.in_w + iw) * c;
        std::copy(acc.begin(), acc.end(), dxp);
      }
    }
  });
}

template <typename T>
void depthwise2d_bwd_weights_scalar(const T* x, const T* dy, T* dw, const Conv2dGeom& g) {
  const int64_t c = g.cin;
  std::fill(dw, dw + g.kh * g.kw * c, T(0));
  parallel_for(g.kh * g.kw, [&](int64_t t0, int64_t t1) {
    for (int64_t t = t0; t < t1; ++t) {
      const int64_t kh = t / g.kw;
      const int64_t kw = t % g.kw;
      T* dwp = dw + (kh * g.kw + kw) * c;
      for (int64_t n = 0; n < g.n; ++n) {
        for (int64_t oh = 0; oh < g.out_h; ++oh) {
          const int64_t ih = oh * g.stride - g.pad_top + kh;
          if (ih < 0 || ih >= g.in_h) continue;
          for (int64_t ow = 0; ow < g.out_w; ++ow) {
            const int64_t iw = ow * g.stride - g.pad_left + kw;
            if (iw < 0 || iw >= g.in_w) continue;
            const T* xp = x + ((n * g.in_h + ih) * g.in_w + iw) * c;
            const T* dyp = dy + ((n * g.out_h + oh) * g.out_w + ow) * c;
            for (int64_t ch = 0; ch < c; ++ch) {
              dwp[ch] += xp[ch] * dyp[ch];
            }
          }
        }
      }
    }
  });
}

// c[i,j] accumulated over k ascending; i-k-j loop keeps b row-contiguous.
template <typename T>
void matmul_scalar(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
  parallel_for(m, [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) {
      T* cp = c + i * n;
      std::fill(cp, cp + n, T(0));
      for (int64_t kk = 0; kk < k; ++kk) {
        const T av = a[i * k + kk];
        const T* bp = b + kk * n;
        for (int64_t j = 0; j < n; ++j) {
          cp[j] += av * bp[j];
        }
      }
    }
  });
}

template <typename T>
void relu_scalar(const T* x, T* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) {
    y[i] = x[i] > T(0) ? x[i] : T(0);
  }
}

template <typename T>
KernelTable<T> make_scalar_table() {
  KernelTable<T> t;
  t.conv2d = &conv2d_scalar<T>;
  t.conv2d_bwd_input = &conv2d_bwd_input_scalar<T>;
  t.conv2d_bwd_weights = &conv2d_bwd_weights_scalar<T>;
  t.depthwise2d = &depthwise2d_scalar<T>;
  t.depthwise2d_bwd_input = &depthwise2d_bwd_input_scalar<T>;
  t.depthwise2d_bwd_weights = &depthwise2d_bwd_weights_scalar<T>;
  t.matmul = &matmul_scalar<T>;
  t.relu = &relu_scalar<T>;
  return t;
}

}  // namespace detail
}  // namespace ropnet::kern
