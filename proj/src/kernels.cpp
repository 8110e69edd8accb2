#include "ropnet/kernels.hpp"

#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

#include "kernels_internal.hpp"
#include "ropnet/error.hpp"

namespace ropnet::kern {
namespace {

struct State {
  Backend backend = Backend::Scalar;
  int threads = 1;
};

Backend parse_backend_name(const std::string& s) {
  if (s == "scalar") return Backend::Scalar;
  if (s == "avx2") return Backend::Avx2;
  if (s == "neon") return Backend::Neon;
  raise(ErrorKind::Parameter, "unknown backend '" + s + "' (expected scalar|avx2|neon)");
}

Backend default_backend() {
  if (const char* env = std::getenv("ROPNET_BACKEND")) {
    const Backend b = parse_backend_name(env);
    if (!backend_available(b)) {
      raise(ErrorKind::Capability,
            std::string("ROPNET_BACKEND=") + env + " requested but not available on this machine");
    }
    return b;
  }
  if (backend_available(Backend::Avx2)) return Backend::Avx2;
  if (backend_available(Backend::Neon)) return Backend::Neon;
  return Backend::Scalar;
}

int default_threads() {
  if (const char* env = std::getenv("ROPNET_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1 || v > 4096) {
      raise(ErrorKind::Parameter, std::string("invalid ROPNET_THREADS value '") + env + "'");
    }
    return static_cast<int>(v);
  }
  return 1;
}

State& state() {
  static State s = [] {
    State v;
    v.backend = default_backend();
    v.threads = default_threads();
    return v;
  }();
  return s;
}

template <typename T>
const KernelTable<T>& table_for(Backend b);

template <>
const KernelTable<float>& table_for<float>(Backend b) {
  switch (b) {
#if defined(ROPNET_BUILD_AVX2)
    case Backend::Avx2:
      return avx2_table_f32();
#endif
#if defined(ROPNET_BUILD_NEON)
    case Backend::Neon:
      return neon_table_f32();
#endif
    default:
      return scalar_table_f32();
  }
}

template <>
const KernelTable<double>& table_for<double>(Backend b) {
  switch (b) {
#if defined(ROPNET_BUILD_AVX2)
    case Backend::Avx2:
      return avx2_table_f64();
#endif
#if defined(ROPNET_BUILD_NEON)
    case Backend::Neon:
      return neon_table_f64();
#endif
    default:
      return scalar_table_f64();
  }
}

template <typename T>
const KernelTable<T>& active_table() {
  return table_for<T>(active_backend());
}

}  // namespace

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return "scalar";
    case Backend::Avx2:
      return "avx2";
    case Backend::Neon:
      return "neon";
  }
  return "?";
}

bool backend_available(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return true;
    case Backend::Avx2:
#if defined(ROPNET_BUILD_AVX2)
      return __builtin_cpu_supports("avx2") != 0;
#else
      return false;
#endif
    case Backend::Neon:
#if defined(ROPNET_BUILD_NEON)
      return true;  // mandatory on aarch64
#else
      return false;
#endif
  }
  return false;
}

std::vector<Backend> available_backends() {
  std::vector<Backend> out;
  for (Backend b : {Backend::Scalar, Backend::Avx2, Backend::Neon}) {
    if (backend_available(b)) out.push_back(b);
  }
  return out;
}

Backend active_backend() { return state().backend; }

void set_backend(Backend b) {
  if (!backend_available(b)) {
    raise(ErrorKind::Capability,
          std::string("backend '") + backend_name(b) + "' is not available on this machine");
  }
  state().backend = b;
}

int threads() { return state().threads; }

void set_threads(int n) {
  if (n < 1 || n > 4096) {
    raise(ErrorKind::Parameter, "thread count must be in [1, 4096], got " + std::to_string(n));
  }
  state().threads = n;
}

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  const int64_t nthreads = std::min<int64_t>(threads(), n);
  if (nthreads <= 1) {
    fn(0, n);
    return;
  }
  const int64_t chunk = (n + nthreads - 1) / nthreads;
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(static_cast<size_t>(nthreads));
  for (int64_t t = 1; t < nthreads; ++t) {
    const int64_t lo = t * chunk;
    const int64_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    workers.emplace_back([&, t, lo, hi] {
      try {
        fn(lo, hi);
      } catch (...) {
        errors[static_cast<size_t>(t)] = std::current_exception();
      }
    });
  }
  try {
    fn(0, std::min(n, chunk));
  } catch (...) {
    errors[0] = std::current_exception();
  }
  for (auto& w : workers) w.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

template <typename T>
void conv2d(const T* x, const T* w, T* y, const Conv2dGeom& g) {
  active_table<T>().conv2d(x, w, y, g);
}

template <typename T>
void conv2d_bwd_input(const T* dy, const T* wt, T* dx, const Conv2dGeom& g) {
  active_table<T>().conv2d_bwd_input(dy, wt, dx, g);
}

template <typename T>
void conv2d_bwd_weights(const T* x, const T* dy, T* dw, const Conv2dGeom& g) {
  active_table<T>().conv2d_bwd_weights(x, dy, dw, g);
}

template <typename T>
void depthwise2d(const T* x, const T* w, T* y, const Conv2dGeom& g) {
  active_table<T>().depthwise2d(x, w, y, g);
}

template <typename T>
void depthwise2d_bwd_input(const T* dy, const T* w, T* dx, const Conv2dGeom& g) {
  active_table<T>().depthwise2d_bwd_input(dy, w, dx, g);
}

template <typename T>
void depthwise2d_bwd_weights(const T* x, const T* dy, T* dw, const Conv2dGeom& g) {
  active_table<T>().depthwise2d_bwd_weights(x, dy, dw, g);
}

template <typename T>
void matmul(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
  active_table<T>().matmul(a, b, c, m, k, n);
}

template <typename T>
void relu(const T* x, T* y, int64_t n) {
  active_table<T>().relu(x, y, n);
}

template void conv2d<float>(const float*, const float*, float*, const Conv2dGeom&);
template void conv2d<double>(const double*, const double*, double*, const Conv2dGeom&);
template void conv2d_bwd_input<float>(const float*, const float*, float*, const Conv2dGeom&);
template void conv2d_bwd_input<double>(const double*, const double*, double*, const Conv2dGeom&);
template void conv2d_bwd_weights<float>(const float*, const float*, float*, const Conv2dGeom&);
template void conv2d_bwd_weights<double>(const double*, const double*, double*, const Conv2dGeom&);
template void depthwise2d<float>(const float*, const float*, float*, const Conv2dGeom&);
template void depthwise2d<double>(const double*, const double*, double*, const Conv2dGeom&);
template void depthwise2d_bwd_input<float>(const float*, const float*, float*, const Conv2dGeom&);
template void depthwise2d_bwd_input<double>(const double*, const double*, double*,
                                            const Conv2dGeom&);
template void depthwise2d_bwd_weights<float>(const float*, const float*, float*,
                                             const Conv2dGeom&);
template void depthwise2d_bwd_weights<double>(const double*, const double*, double*,
                                              const Conv2dGeom&);
template void matmul<float>(const float*, const float*, float*, int64_t, int64_t, int64_t);
template void matmul<double>(const double*, const double*, double*, int64_t, int64_t, int64_t);
template void relu<float>(const float*, float*, int64_t);
template void relu<double>(const double*, double*, int64_t);

}  // namespace ropnet::kern
