#if defined(ROPNET_BUILD_NEON)

#include <arm_neon.h>

#include "kernels_internal.hpp"

// NEON counterparts of the hot f32 paths. Same rules as the AVX2 build:
// separate vmul/vadd (no fused multiply-add) and scalar-identical per-lane
// accumulation order.
namespace ropnet::kern {
namespace {

void conv2d_neon_f32(const float* x, const float* w, float* y, const Conv2dGeom& g) {
  const int64_t co_full = g.cout & ~int64_t(3);
  parallel_for(g.n * g.out_h, [&](int64_t r0, int64_t r1) {
    for (int64_t r = r0; r < r1; ++r) {
      const int64_t n = r / g.out_h;
      const int64_t oh = r % g.out_h;
      for (int64_t ow = 0; ow < g.out_w; ++ow) {
        float* yp = y + ((n * g.out_h + oh) * g.out_w + ow) * g.cout;
        for (int64_t co = 0; co < co_full; co += 4) {
          float32x4_t acc = vdupq_n_f32(0.0f);
          for (int64_t kh = 0; kh < g.kh; ++kh) {
            const int64_t ih = oh * g.stride - g.pad_top + kh;
            if (ih < 0 || ih >= g.in_h) continue;
            for (int64_t kw = 0; kw < g.kw; ++kw) {
              const int64_t iw = ow * g.stride - g.pad_left + kw;
              if (iw < 0 || iw >= g.in_w) continue;
              const float* xp = x + ((n * g.in_h + ih) * g.in_w + iw) * g.cin;
              const float* wp = w + ((kh * g.kw + kw) * g.cin) * g.cout + co;
              for (int64_t ci = 0; ci < g.cin; ++ci) {
                const float32x4_t xv = vdupq_n_f32(xp[ci]);
                const float32x4_t wv = vld1q_f32(wp + ci * g.cout);
                acc = vaddq_f32(acc, vmulq_f32(xv, wv));
              }
            }
          }
          vst1q_f32(yp + co, acc);
        }
        for (int64_t co = co_full; co < g.cout; ++co) {
          float acc = 0.0f;
          for (int64_t kh = 0; kh < g.kh; ++kh) {
            const int64_t ih = oh * g.stride - g.pad_top + kh;
            if (ih < 0 || ih >= g.in_h) continue;
            for (int64_t kw = 0; kw < g.kw; ++kw) {
              const int64_t iw = ow * g.stride - g.pad_left + kw;
              if (iw < 0 || iw >= g.in_w) continue;
              const float* xp = x + ((n * g.in_h + ih) * g.in_w + iw) * g.cin;
              const float* wp = w + ((kh * g.kw + kw) * g.cin) * g.cout + co;
              for (int64_t ci = 0; ci < g.cin; ++ci) {
                acc += xp[ci] * wp[ci * g.cout];
              }
            }
          }
          yp[co] = acc;
        }
      }
    }
  });
}

void matmul_neon_f32(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n) {
  const int64_t n_full = n & ~int64_t(3);
  parallel_for(m, [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) {
      float* cp = c + i * n;
      std::fill(cp, cp + n, 0.0f);
      for (int64_t kk = 0; kk < k; ++kk) {
        const float av = a[i * k + kk];
        const float32x4_t avv = vdupq_n_f32(av);
        const float* bp = b + kk * n;
        for (int64_t j = 0; j < n_full; j += 4) {
          const float32x4_t bv = vld1q_f32(bp + j);
          const float32x4_t cv = vld1q_f32(cp + j);
          vst1q_f32(cp + j, vaddq_f32(cv, vmulq_f32(avv, bv)));
        }
        for (int64_t j = n_full; j < n; ++j) {
          cp[j] += av * bp[j];
        }
      }
    }
  });
}

void relu_neon_f32(const float* x, float* y, int64_t n) {
  const int64_t n_full = n & ~int64_t(3);
  const float32x4_t zero = vdupq_n_f32(0.0f);
  for (int64_t i = 0; i < n_full; i += 4) {
    const float32x4_t xv = vld1q_f32(x + i);
    const uint32x4_t mask = vcgtq_f32(xv, zero);
    vst1q_f32(y + i, vreinterpretq_f32_u32(vandq_u32(vreinterpretq_u32_f32(xv), mask)));
  }
  for (int64_t i = n_full; i < n; ++i) {
    y[i] = x[i] > 0.0f ? x[i] : 0.0f;
  }
}

}  // namespace

const KernelTable<float>& neon_table_f32() {
  static const KernelTable<float> t = [] {
    KernelTable<float> v = detail::make_scalar_table<float>();
    v.conv2d = &conv2d_neon_f32;
    v.matmul = &matmul_neon_f32;
    v.relu = &relu_neon_f32;
    return v;
  }();
  return t;
}

const KernelTable<double>& neon_table_f64() {
  return scalar_table_f64();
}

}  // namespace ropnet::kern

#endif  // ROPNET_BUILD_NEON
