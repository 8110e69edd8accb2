#include "ropnet/runtime.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <utility>

#include "geometry.hpp"
#include "ropnet/rng.hpp"
#include "scalar_ops.hpp"

namespace ropnet {
namespace {

// Must match the batch-norm forward default so the planned path reproduces
// the eager normalization bitwise.
constexpr double kBnEps = 1e-5;

constexpr int64_t kGuard = 16;  // guard words on each side of a buffer
constexpr uint32_t kCanaryBits = 0xA55AA55Au;

std::string shape_str(const std::vector<int64_t>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

int64_t numel_of(const std::vector<int64_t>& s) {
  int64_t n = 1;
  for (int64_t v : s) n *= v;
  return n;
}

// First-fit offset assignment over freed intervals. `pad` reserves guard
// space on both sides of every allocation (0 when canaries are off), so the
// allocator's non-overlap guarantee covers the guards too.
class FirstFit {
 public:
  explicit FirstFit(int64_t pad) : pad_(pad) {}

  int64_t alloc(int64_t n) {
    const int64_t need = n + 2 * pad_;
    for (size_t i = 0; i < free_.size(); ++i) {
      if (free_[i].second - free_[i].first >= need) {
        const int64_t off = free_[i].first;
        free_[i].first += need;
        if (free_[i].first == free_[i].second) free_.erase(free_.begin() + i);
        return off + pad_;
      }
    }
    int64_t off = high_;
    if (!free_.empty() && free_.back().second == high_) {
      off = free_.back().first;  // grow into a gap touching the high-water mark
      free_.pop_back();
    }
    high_ = off + need;
    return off + pad_;
  }

  void release(int64_t data_off, int64_t n) {
    free_.push_back({data_off - pad_, data_off + n + pad_});
    std::sort(free_.begin(), free_.end());
    std::vector<std::pair<int64_t, int64_t>> merged;
    for (const auto& iv : free_) {
      if (!merged.empty() && merged.back().second == iv.first) {
        merged.back().second = iv.second;
      } else {
        merged.push_back(iv);
      }
    }
    free_.swap(merged);
  }

  int64_t high() const { return high_; }

 private:
  int64_t pad_ = 0;
  std::vector<std::pair<int64_t, int64_t>> free_;  // sorted, coalesced [begin,end)
  int64_t high_ = 0;
};

void fill_guards(float* base, int64_t data_off, int64_t n) {
  float word;
  std::memcpy(&word, &kCanaryBits, sizeof(word));
  std::fill_n(base + data_off - kGuard, kGuard, word);
  std::fill_n(base + data_off + n, kGuard, word);
}

int64_t scan_guards(const float* base, int64_t data_off, int64_t n) {
  int64_t bad = 0;
  const int64_t starts[2] = {data_off - kGuard, data_off + n};
  for (int64_t lo : starts) {
    for (int64_t i = 0; i < kGuard; ++i) {
      uint32_t bits;
      std::memcpy(&bits, base + lo + i, sizeof(bits));
      if (bits != kCanaryBits) ++bad;
    }
  }
  return bad;
}

}  // namespace

ExecutionPlan plan(const ModelSpec& spec, const Parameters& params,
                   const std::vector<int64_t>& batch_shape, bool canaries) {
  if (batch_shape.size() != 4) {
    raise(ErrorKind::Capability,
          "plan needs a static rank-4 batch shape, got " + shape_str(batch_shape));
  }
  for (int64_t v : batch_shape) {
    if (v < 1) {
      raise(ErrorKind::Capability,
            "plan needs fully static extents >= 1, got " + shape_str(batch_shape));
    }
  }
  if (spec.layers.empty()) {
    raise(ErrorKind::Capability, "model '" + spec.name + "' has no layers");
  }
  if (batch_shape[1] != spec.input_h || batch_shape[2] != spec.input_w ||
      batch_shape[3] != spec.input_c) {
    raise(ErrorKind::Shape, "input batch does not match model input " +
                                std::to_string(spec.input_h) + "x" + std::to_string(spec.input_w) +
                                "x" + std::to_string(spec.input_c));
  }

  ExecutionPlan p;
  p.spec = &spec;
  p.params = &params;
  p.batch_shape = batch_shape;
  p.canaries = canaries;
  p.ops.reserve(spec.layers.size());

  FirstFit arena(canaries ? kGuard : 0);
  std::vector<int64_t> cur_shape = batch_shape;
  int64_t cur_off = arena.alloc(numel_of(cur_shape));
  p.in_offset = cur_off;

  // Shapes follow the weight tensors, exactly as the eager engine resolves
  // them, so the two engines accept and reject the same graphs.
  auto need_rank = [&](size_t rank, int64_t idx, const char* what) {
    if (cur_shape.size() != rank) {
      raise(ErrorKind::Shape, std::string(what) + " at layer " + std::to_string(idx) +
                                  " needs rank-" + std::to_string(rank) + " input, got " +
                                  shape_str(cur_shape));
    }
  };

  for (size_t li = 0; li < spec.layers.size(); ++li) {
    const LayerSpec& layer = spec.layers[li];
    const int64_t idx = static_cast<int64_t>(li);
    PlanOp op;
    op.kind = layer.kind;
    op.layer = idx;
    op.in_shape = cur_shape;
    op.in_offset = cur_off;

    if (layer.kind == LayerKind::Flatten) {
      if (cur_shape.size() < 2) {
        raise(ErrorKind::Shape, "flatten needs rank >= 2, got " + shape_str(cur_shape));
      }
      int64_t rest = 1;
      for (size_t a = 1; a < cur_shape.size(); ++a) rest *= cur_shape[a];
      op.out_shape = {cur_shape[0], rest};
      op.out_offset = cur_off;  // reshape only; the buffer is untouched
      cur_shape = op.out_shape;
      p.ops.push_back(std::move(op));
      continue;
    }

    switch (layer.kind) {
      case LayerKind::Conv: {
        need_rank(4, idx, "conv");
        const Tensor& w = params.at(param_name(idx, "weight"));
        if (w.rank() != 4 || w.extent(2) != cur_shape[3]) {
          raise(ErrorKind::Shape, "conv input channels " + std::to_string(cur_shape[3]) +
                                      " do not match weights " + shape_str(w.shape()));
        }
        op.geom = detail::conv_geom(cur_shape, w.extent(0), w.extent(1), w.extent(3),
                                    layer.conv.stride, layer.conv.padding);
        op.out_shape = {op.geom.n, op.geom.out_h, op.geom.out_w, op.geom.cout};
        op.weight = w.data();
        break;
      }
      case LayerKind::DepthwiseConv: {
        need_rank(4, idx, "depthwise conv");
        const Tensor& w = params.at(param_name(idx, "weight"));
        if (w.rank() != 3 || w.extent(2) != cur_shape[3]) {
          raise(ErrorKind::Shape, "depthwise input channels " + std::to_string(cur_shape[3]) +
                                      " do not match weights " + shape_str(w.shape()));
        }
        op.geom = detail::conv_geom(cur_shape, w.extent(0), w.extent(1), cur_shape[3],
                                    layer.conv.stride, layer.conv.padding);
        op.out_shape = {op.geom.n, op.geom.out_h, op.geom.out_w, op.geom.cin};
        op.weight = w.data();
        break;
      }
      case LayerKind::BatchNorm: {
        need_rank(4, idx, "batch norm");
        const Tensor& gamma = params.at(param_name(idx, "gamma"));
        const Tensor& beta = params.at(param_name(idx, "beta"));
        const Tensor& rm = params.at(param_name(idx, "running_mean"));
        const Tensor& rv = params.at(param_name(idx, "running_var"));
        const int64_t c = cur_shape[3];
        for (const Tensor* t : {&gamma, &beta, &rm, &rv}) {
          if (t->rank() != 1 || t->extent(0) != c) {
            raise(ErrorKind::Shape, "batch norm parameters must have shape [" +
                                        std::to_string(c) + "], got " + shape_str(t->shape()));
          }
        }
        op.out_shape = cur_shape;
        op.bn_gamma = gamma.data();
        op.bn_beta = beta.data();
        op.bn_mean = rm.data();
        op.bn_invstd.resize(static_cast<size_t>(c));
        for (int64_t ch = 0; ch < c; ++ch) {
          op.bn_invstd[static_cast<size_t>(ch)] =
              static_cast<float>(1.0 / std::sqrt(static_cast<double>(rv[ch]) + kBnEps));
        }
        break;
      }
      case LayerKind::Relu:
      case LayerKind::Sigmoid:
        op.out_shape = cur_shape;
        break;
      case LayerKind::Dense: {
        need_rank(2, idx, "dense");
        const Tensor& w = params.at(param_name(idx, "weight"));
        const Tensor& b = params.at(param_name(idx, "bias"));
        if (w.rank() != 2 || w.extent(0) != cur_shape[1] || b.rank() != 1 ||
            b.extent(0) != w.extent(1)) {
          raise(ErrorKind::Shape, "dense layer " + std::to_string(idx) +
                                      " weights do not match input " + shape_str(cur_shape));
        }
        op.out_shape = {cur_shape[0], w.extent(1)};
        op.weight = w.data();
        op.bias = b.data();
        break;
      }
      default:
        raise(ErrorKind::Capability, "unsupported layer kind in model graph");
    }

    op.out_offset = arena.alloc(numel_of(op.out_shape));
    arena.release(cur_off, numel_of(cur_shape));
    cur_off = op.out_offset;
    cur_shape = op.out_shape;
    p.ops.push_back(std::move(op));
  }

  p.out_shape = cur_shape;

  p.out_offset = cur_off;
  p.arena_floats = arena.high();
  return p;
}

Tensor execute_planned(ExecutionPlan& plan, const Tensor& input) {
  if (!plan.spec || !plan.params || plan.ops.empty()) {
    raise(ErrorKind::Parameter, "execute_planned needs a built plan");
  }
  if (input.shape() != plan.batch_shape) {
    raise(ErrorKind::Shape, "input shape " + shape_str(input.shape()) +
                                " does not match planned batch " + shape_str(plan.batch_shape));
  }
  if (static_cast<int64_t>(plan.arena.size()) != plan.arena_floats) {
    plan.arena.assign(static_cast<size_t>(plan.arena_floats), 0.0f);
  }
  float* a = plan.arena.data();

  std::copy_n(input.data(), input.numel(), a + plan.in_offset);
  if (plan.canaries) fill_guards(a, plan.in_offset, input.numel());

  for (const PlanOp& op : plan.ops) {
    if (op.kind == LayerKind::Flatten) continue;
    const float* in = a + op.in_offset;
    float* out = a + op.out_offset;
    const int64_t in_n = numel_of(op.in_shape);
    const int64_t out_n = numel_of(op.out_shape);
    if (plan.canaries) fill_guards(a, op.out_offset, out_n);

    switch (op.kind) {
      case LayerKind::Conv:
        kern::conv2d(in, op.weight, out, op.geom);
        break;
      case LayerKind::DepthwiseConv:
        kern::depthwise2d(in, op.weight, out, op.geom);
        break;
      case LayerKind::BatchNorm: {
        const int64_t c = op.in_shape[3];
        const int64_t rows = in_n / c;
        const float* invstd = op.bn_invstd.data();
        for (int64_t r = 0; r < rows; ++r) {
          const float* xr = in + r * c;
          float* yr = out + r * c;
          for (int64_t ch = 0; ch < c; ++ch) {
            const float xhat = (xr[ch] - op.bn_mean[ch]) * invstd[ch];
            yr[ch] = op.bn_gamma[ch] * xhat + op.bn_beta[ch];
          }
        }
        break;
      }
      case LayerKind::Relu:
        kern::relu(in, out, in_n);
        break;
      case LayerKind::Sigmoid:
        detail::sigmoid_span(in, out, in_n);
        break;
      case LayerKind::Dense: {
        const int64_t m = op.in_shape[0], k = op.in_shape[1], units = op.out_shape[1];
        kern::matmul(in, op.weight, out, m, k, units);
        for (int64_t i = 0; i < m; ++i) {
          float* row = out + i * units;
          for (int64_t j = 0; j < units; ++j) row[j] += op.bias[j];
        }
        break;
      }
      default:
        raise(ErrorKind::Capability, "unsupported layer kind in plan");
    }

    if (plan.canaries) {
      plan.canary_violations += scan_guards(a, op.out_offset, out_n);
      plan.canary_violations += scan_guards(a, op.in_offset, in_n);
    }
  }

  Tensor y(plan.out_shape);
  std::copy_n(a + plan.out_offset, y.numel(), y.data());
  return y;
}

const char* bench_mode_name(BenchMode mode) {
  switch (mode) {
    case BenchMode::Eager:
      return "eager";
    case BenchMode::PlannedPercall:
      return "planned_percall";
    case BenchMode::PlannedPreinit:
      return "planned_preinit";
  }
  return "eager";
}

BenchMode bench_mode_from(const std::string& name) {
  if (name == "eager") return BenchMode::Eager;
  if (name == "planned_percall") return BenchMode::PlannedPercall;
  if (name == "planned_preinit") return BenchMode::PlannedPreinit;
  raise(ErrorKind::Parameter,
        "unknown bench mode '" + name + "' (expected eager, planned_percall, planned_preinit)");
}

namespace {
// Keeps the benchmark loops from being optimized away.
volatile double g_bench_sink = 0.0;
}  // namespace

FpsReport fps_bench(const std::string& model_path, BenchMode mode, int64_t n_images,
                    int64_t runtimes, uint64_t seed) {
  if (n_images < 1) raise(ErrorKind::Parameter, "bench needs n_images >= 1");
  if (runtimes < 1) raise(ErrorKind::Parameter, "bench needs runtimes >= 1");

  BuiltModel m = load_model(model_path);
  const std::vector<int64_t> in_shape{1, m.spec.input_h, m.spec.input_w, m.spec.input_c};

  Rng rng(seed);
  std::vector<Tensor> images;
  images.reserve(static_cast<size_t>(n_images));
  for (int64_t i = 0; i < n_images; ++i) {
    Tensor t(in_shape);
    float* d = t.data();
    for (int64_t j = 0; j < t.numel(); ++j) d[j] = static_cast<float>(rng.uniform01());
    images.push_back(std::move(t));
  }

  ExecutionPlan preinit;
  if (mode == BenchMode::PlannedPreinit) preinit = plan(m.spec, m.params, in_shape);

  const Parameters& params = m.params;
  auto run_all = [&]() {
    double sink = 0.0;
    switch (mode) {
      case BenchMode::Eager:
        for (const Tensor& img : images) sink += forward(m.spec, params, img)[0];
        break;
      case BenchMode::PlannedPercall: {
        ExecutionPlan p = plan(m.spec, m.params, in_shape);
        for (const Tensor& img : images) sink += execute_planned(p, img)[0];
        break;
      }
      case BenchMode::PlannedPreinit:
        for (const Tensor& img : images) sink += execute_planned(preinit, img)[0];
        break;
    }
    g_bench_sink = g_bench_sink + sink;
  };

  FpsReport r;
  r.model = m.spec.name;
  r.mode = bench_mode_name(mode);
  r.n_images = n_images;
  r.runtimes = runtimes;

  run_all();  // warm-up, untimed
  r.seconds.reserve(static_cast<size_t>(runtimes));
  for (int64_t rep = 0; rep < runtimes; ++rep) {
    const auto t0 = std::chrono::steady_clock::now();
    run_all();
    double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (dt <= 0.0) dt = 1e-9;  // timer granularity floor
    r.seconds.push_back(dt);
  }

  double sum = 0.0;
  for (double s : r.seconds) sum += static_cast<double>(n_images) / s;
  r.mean_fps = sum / static_cast<double>(runtimes);
  double ssd = 0.0;
  for (double s : r.seconds) {
    const double d = static_cast<double>(n_images) / s - r.mean_fps;
    ssd += d * d;
  }
  r.std_fps = std::sqrt(ssd / static_cast<double>(runtimes));
  return r;
}

void normalize_reports(std::vector<FpsReport>& reports) {
  double best = 0.0;
  for (const FpsReport& r : reports) best = std::max(best, r.mean_fps);
  if (best <= 0.0) return;
  for (FpsReport& r : reports) r.normalized_fps = r.mean_fps / best;
}

void export_bench_csv(const std::vector<FpsReport>& reports, const std::string& path) {
  std::vector<FpsReport> rows = reports;
  normalize_reports(rows);
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorKind::Io, "cannot open '" + path + "' for writing");
  out << "model,mode,n_images,runtimes,mean_fps,std_fps,normalized_fps\n";
  char buf[160];
  for (const FpsReport& r : rows) {
    std::snprintf(buf, sizeof(buf), ",%lld,%lld,%.6f,%.6f,%.6f\n",
                  static_cast<long long>(r.n_images), static_cast<long long>(r.runtimes),
                  r.mean_fps, r.std_fps, r.normalized_fps);
    out << r.model << ',' << r.mode << buf;
  }
  if (!out.good()) raise(ErrorKind::Io, "failed writing '" + path + "'");
}

}  // namespace ropnet
