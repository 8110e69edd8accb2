#if defined(ROPNET_BUILD_AVX2)

#include <immintrin.h>

#include "kernels_internal.hpp"

// AVX2 variants. Lanes always run across *independent* output elements
// (cout for conv forward, cin for the input gradient, j for matmul), so each
// lane performs exactly the scalar sequence of mul/add in the same order.
// Built without FMA on purpose: a fused multiply-add rounds once, the scalar
// reference rounds twice, and the backends must agree bitwise.
namespace ropnet::kern {
namespace {

void conv2d_avx2_f32(const float* x, const float* w, float* y, const Conv2dGeom& g) {
  const int64_t co_full = g.cout & ~int64_t(7);
  parallel_for(g.n * g.out_h, [&](int64_t r0, int64_t r1) {
    for (int64_t r = r0; r < r1; ++r) {
      const int64_t n = r / g.out_h;
      const int64_t oh = r % g.out_h;
      for (int64_t ow = 0; ow < g.out_w; ++ow) {
        float* yp = y + ((n * g.out_h + oh) * g.out_w + ow) * g.cout;
        for (int64_t co = 0; co < co_full; co += 8) {
          __m256 acc = _mm256_setzero_ps();
          for (int64_t kh = 0; kh < g.kh; ++kh) {
            const int64_t ih = oh * g.stride - g.pad_top + kh;
            if (ih < 0 || ih >= g.in_h) continue;
            for (int64_t kw = 0; kw < g.kw; ++kw) {
              const int64_t iw = ow * g.stride - g.pad_left + kw;
              if (iw < 0 || iw >= g.in_w) continue;
              const float* xp = x + ((n * g.in_h + ih) * g.in_w + iw) * g.cin;
              const float* wp = w + ((kh * g.kw + kw) * g.cin) * g.cout + co;
              for (int64_t ci = 0; ci < g.cin; ++ci) {
                const __m256 xv = _mm256_set1_ps(xp[ci]);
                const __m256 wv = _mm256_loadu_ps(wp + ci * g.cout);
                acc = _mm256_add_ps(acc, _mm256_mul_ps(xv, wv));
              }
            }
          }
          _mm256_storeu_ps(yp + co, acc);
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

void conv2d_bwd_input_avx2_f32(const float* dy, const float* wt, float* dx, const Conv2dGeom& g) {
  const int64_t ci_full = g.cin & ~int64_t(7);
  parallel_for(g.n * g.in_h, [&](int64_t r0, int64_t r1) {
    for (int64_t r = r0; r < r1; ++r) {
      const int64_t n = r / g.in_h;
      const int64_t ih = r % g.in_h;
      for (int64_t iw = 0; iw < g.in_w; ++iw) {
        float* dxp = dx + ((n * g.in_h + ih) * g.in_w + iw) * g.cin;
        for (int64_t ci = 0; ci < ci_full; ci += 8) {
          __m256 acc = _mm256_setzero_ps();
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
              const float* dyp = dy + ((n * g.out_h + oh) * g.out_w + ow) * g.cout;
              const float* wtp = wt + ((kh * g.kw + kw) * g.cout) * g.cin + ci;
              for (int64_t co = 0; co < g.cout; ++co) {
                const __m256 dv = _mm256_set1_ps(dyp[co]);
                const __m256 wv = _mm256_loadu_ps(wtp + co * g.cin);
                acc = _mm256_add_ps(acc, _mm256_mul_ps(dv, wv));
              }
            }
          }
          _mm256_storeu_ps(dxp + ci, acc);
        }
        for (int64_t ci = ci_full; ci < g.cin; ++ci) {
          float acc = 0.0f;
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
              const float* dyp = dy + ((n * g.out_h + oh) * g.out_w + ow) * g.cout;
              const float* wtp = wt + ((kh * g.kw + kw) * g.cout) * g.cin + ci;
              for (int64_t co = 0; co < g.cout; ++co) {
                acc += dyp[co] * wtp[co * g.cin];
              }
            }
          }
          dxp[ci] = acc;
        }
      }
    }
  });
}

void conv2d_bwd_weights_avx2_f32(const float* x, const float* dy, float* dw, const Conv2dGeom& g) {
  std::fill(dw, dw + g.kh * g.kw * g.cin * g.cout, 0.0f);
  const int64_t co_full = g.cout & ~int64_t(7);
  parallel_for(g.kh * g.kw, [&](int64_t t0, int64_t t1) {
    for (int64_t t = t0; t < t1; ++t) {
      const int64_t kh = t / g.kw;
      const int64_t kw = t % g.kw;
      float* dwp_base = dw + ((kh * g.kw + kw) * g.cin) * g.cout;
      for (int64_t n = 0; n < g.n; ++n) {
        for (int64_t oh = 0; oh < g.out_h; ++oh) {
          const int64_t ih = oh * g.stride - g.pad_top + kh;
          if (ih < 0 || ih >= g.in_h) continue;
          for (int64_t ow = 0; ow < g.out_w; ++ow) {
            const int64_t iw = ow * g.stride - g.pad_left + kw;
            if (iw < 0 || iw >= g.in_w) continue;
            const float* xp = x + ((n * g.in_h + ih) * g.in_w + iw) * g.cin;
            const float* dyp = dy + ((n * g.out_h + oh) * g.out_w + ow) * g.cout;
            for (int64_t ci = 0; ci < g.cin; ++ci) {
              const __m256 xv = _mm256_set1_ps(xp[ci]);
              float* dwp = dwp_base + ci * g.cout;
              for (int64_t co = 0; co < co_full; co += 8) {
                const __m256 dv = _mm256_loadu_ps(dyp + co);
                const __m256 cur = _mm256_loadu_ps(dwp + co);
                _mm256_storeu_ps(dwp + co, _mm256_add_ps(cur, _mm256_mul_ps(xv, dv)));
              }
              for (int64_t co = co_full; co < g.cout; ++co) {
                dwp[co] += xp[ci] * dyp[co];
              }
            }
          }
        }
      }
    }
  });
}

void depthwise2d_avx2_f32(const float* x, const float* w, float* y, const Conv2dGeom& g) {
  const int64_t c = g.cin;
  const int64_t c_full = c & ~int64_t(7);
  parallel_for(g.n * g.out_h, [&](int64_t r0, int64_t r1) {
    for (int64_t r = r0; r < r1; ++r) {
      const int64_t n = r / g.out_h;
      const int64_t oh = r % g.out_h;
      for (int64_t ow = 0; ow < g.out_w; ++ow) {
        float* yp = y + ((n * g.out_h + oh) * g.out_w + ow) * c;
        for (int64_t ch = 0; ch < c_full; ch += 8) {
          __m256 acc = _mm256_setzero_ps();
          for (int64_t kh = 0; kh < g.kh; ++kh) {
            const int64_t ih = oh * g.stride - g.pad_top + kh;
            if (ih < 0 || ih >= g.in_h) continue;
            for (int64_t kw = 0; kw < g.kw; ++kw) {
              const int64_t iw = ow * g.stride - g.pad_left + kw;
              if (iw < 0 || iw >= g.in_w) continue;
              const __m256 xv = _mm256_loadu_ps(x + ((n * g.in_h + ih) * g.in_w + iw) * c + ch);
              const __m256 wv = _mm256_loadu_ps(w + (kh * g.kw + kw) * c + ch);
              acc = _mm256_add_ps(acc, _mm256_mul_ps(xv, wv));
            }
          }
          _mm256_storeu_ps(yp + ch, acc);
        }
        for (int64_t ch = c_full; ch < c; ++ch) {
          float acc = 0.0f;
          for (int64_t kh = 0; kh < g.kh; ++kh) {
            const int64_t ih = oh * g.stride - g.pad_top + kh;
            if (ih < 0 || ih >= g.in_h) continue;
            for (int64_t kw = 0; kw < g.kw; ++kw) {
              const int64_t iw = ow * g.stride - g.pad_left + kw;
              if (iw < 0 || iw >= g.in_w) continue;
              acc += x[((n * g.in_h + ih) * g.in_w + iw) * c + ch] * w[(kh * g.kw + kw) * c + ch];
            }
          }
          yp[ch] = acc;
        }
      }
    }
  });
}

void matmul_avx2_f32(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n) {
  const int64_t n_full = n & ~int64_t(7);
  parallel_for(m, [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) {
      float* cp = c + i * n;
      std::fill(cp, cp + n, 0.0f);
      for (int64_t kk = 0; kk < k; ++kk) {
        const float av = a[i * k + kk];
        const __m256 avv = _mm256_set1_ps(av);
        const float* bp = b + kk * n;
        for (int64_t j = 0; j < n_full; j += 8) {
          const __m256 bv = _mm256_loadu_ps(bp + j);
          const __m256 cv = _mm256_loadu_ps(cp + j);
          _mm256_storeu_ps(cp + j, _mm256_add_ps(cv, _mm256_mul_ps(avv, bv)));
        }
        for (int64_t j = n_full; j < n; ++j) {
          cp[j] += av * bp[j];
        }
      }
    }
  });
}

void relu_avx2_f32(const float* x, float* y, int64_t n) {
  const int64_t n_full = n & ~int64_t(7);
  const __m256 zero = _mm256_setzero_ps();
  for (int64_t i = 0; i < n_full; i += 8) {
    const __m256 xv = _mm256_loadu_ps(x + i);
    const __m256 mask = _mm256_cmp_ps(xv, zero, _CMP_GT_OQ);
    _mm256_storeu_ps(y + i, _mm256_and_ps(xv, mask));
  }
  for (int64_t i = n_full; i < n; ++i) {
    y[i] = x[i] > 0.0f ? x[i] : 0.0f;
  }
}

void conv2d_avx2_f64(const double* x, const double* w, double* y, const Conv2dGeom& g) {
  const int64_t co_full = g.cout & ~int64_t(3);
  parallel_for(g.n * g.out_h, [&](int64_t r0, int64_t r1) {
    for (int64_t r = r0; r < r1; ++r) {
      const int64_t n = r / g.out_h;
      const int64_t oh = r % g.out_h;
      for (int64_t ow = 0; ow < g.out_w; ++ow) {
        double* yp = y + ((n * g.out_h + oh) * g.out_w + ow) * g.cout;
        for (int64_t co = 0; co < co_full; co += 4) {
          __m256d acc = _mm256_setzero_pd();
          for (int64_t kh = 0; kh < g.kh; ++kh) {
            const int64_t ih = oh * g.stride - g.pad_top + kh;
            if (ih < 0 || ih >= g.in_h) continue;
            for (int64_t kw = 0; kw < g.kw; ++kw) {
              const int64_t iw = ow * g.stride - g.pad_left + kw;
              if (iw < 0 || iw >= g.in_w) continue;
              const double* xp = x + ((n * g.in_h + ih) * g.in_w + iw) * g.cin;
              const double* wp = w + ((kh * g.kw + kw) * g.cin) * g.cout + co;
              for (int64_t ci = 0; ci < g.cin; ++ci) {
                const __m256d xv = _mm256_set1_pd(xp[ci]);
                const __m256d wv = _mm256_loadu_pd(wp + ci * g.cout);
                acc = _mm256_add_pd(acc, _mm256_mul_pd(xv, wv));
              }
            }
          }
          _mm256_storeu_pd(yp + co, acc);
        }
        for (int64_t co = co_full; co < g.cout; ++co) {
          double acc = 0.0;
          for (int64_t kh = 0; kh < g.kh; ++kh) {
            const int64_t ih = oh * g.stride - g.pad_top + kh;
            if (ih < 0 || ih >= g.in_h) continue;
            for (int64_t kw = 0; kw < g.kw; ++kw) {
              const int64_t iw = ow * g.stride - g.pad_left + kw;
              if (iw < 0 || iw >= g.in_w) continue;
              const double* xp = x + ((n * g.in_h + ih) * g.in_w + iw) * g.cin;
              const double* wp = w + ((kh * g.kw + kw) * g.cin) * g.cout + co;
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

void matmul_avx2_f64(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  const int64_t n_full = n & ~int64_t(3);
  parallel_for(m, [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) {
      double* cp = c + i * n;
      std::fill(cp, cp + n, 0.0);
      for (int64_t kk = 0; kk < k; ++kk) {
        const double av = a[i * k + kk];
        const __m256d avv = _mm256_set1_pd(av);
        const double* bp = b + kk * n;
        for (int64_t j = 0; j < n_full; j += 4) {
          const __m256d bv = _mm256_loadu_pd(bp + j);
          const __m256d cv = _mm256_loadu_pd(cp + j);
          _mm256_storeu_pd(cp + j, _mm256_add_pd(cv, _mm256_mul_pd(avv, bv)));
        }
        for (int64_t j = n_full; j < n; ++j) {
          cp[j] += av * bp[j];
        }
      }
    }
  });
}

void relu_avx2_f64(const double* x, double* y, int64_t n) {
  const int64_t n_full = n & ~int64_t(3);
  const __m256d zero = _mm256_setzero_pd();
  for (int64_t i = 0; i < n_full; i += 4) {
    const __m256d xv = _mm256_loadu_pd(x + i);
    const __m256d mask = _mm256_cmp_pd(xv, zero, _CMP_GT_OQ);
    _mm256_storeu_pd(y + i, _mm256_and_pd(xv, mask));
  }
  for (int64_t i = n_full; i < n; ++i) {
    y[i] = x[i] > 0.0 ? x[i] : 0.0;
  }
}

}  // namespace

const KernelTable<float>& avx2_table_f32() {
  static const KernelTable<float> t = [] {
    KernelTable<float> v = detail::make_scalar_table<float>();
    v.conv2d = &conv2d_avx2_f32;
    v.conv2d_bwd_input = &conv2d_bwd_input_avx2_f32;
    v.conv2d_bwd_weights = &conv2d_bwd_weights_avx2_f32;
    v.depthwise2d = &depthwise2d_avx2_f32;
    v.matmul = &matmul_avx2_f32;
    v.relu = &relu_avx2_f32;
    return v;
  }();
  return t;
}

const KernelTable<double>& avx2_table_f64() {
  static const KernelTable<double> t = [] {
    // f64 paths are verification/reference work, not the training hot loop;
    // only the dense ops get vector variants.
    KernelTable<double> v = detail::make_scalar_table<double>();
    v.conv2d = &conv2d_avx2_f64;
    v.matmul = &matmul_avx2_f64;
    v.relu = &relu_avx2_f64;
    return v;
  }();
  return t;
}

}  // namespace ropnet::kern

#endif  // ROPNET_BUILD_AVX2
