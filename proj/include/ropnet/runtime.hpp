#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ropnet/kernels.hpp"
#include "ropnet/model.hpp"
#include "ropnet/tensor.hpp"

namespace ropnet {

// One scheduled step: a layer plus the arena offsets (in floats) its kernel
// reads from and writes to. Flatten is a pure view change, so its output
// aliases its input buffer and execution skips it.
struct PlanOp {
  LayerKind kind = LayerKind::Relu;
  int64_t layer = 0;
  std::vector<int64_t> in_shape;
  std::vector<int64_t> out_shape;
  int64_t in_offset = 0;
  int64_t out_offset = 0;
  kern::Conv2dGeom geom;  // Conv / DepthwiseConv

  // Borrowed parameter storage; see the ExecutionPlan lifetime note.
  const float* weight = nullptr;  // Conv / DepthwiseConv / Dense
  const float* bias = nullptr;    // Dense
  const float* bn_gamma = nullptr;
  const float* bn_beta = nullptr;
  const float* bn_mean = nullptr;    // running mean at plan time
  std::vector<float> bn_invstd;      // 1/sqrt(running_var + eps), frozen at plan time
};

// Static inference schedule over one pre-allocated arena. Buffer offsets are
// assigned greedily by first-fit over freed intervals, so the arena size is
// the high-water mark of the liveness walk and simultaneously-live buffers
// never overlap. The plan borrows `spec` and `params`; it stays valid only
// while both outlive it unmodified. A plan is single-consumer scratch —
// run distinct instances if you want parallel callers.
//
// With `canaries` on, every buffer gets guard words on both sides that are
// filled before the producing op and verified after it; any out-of-bounds
// kernel write bumps `canary_violations`. Guards pad the arena, so size
// comparisons against the no-reuse total should use a canary-free plan.
struct ExecutionPlan {
  const ModelSpec* spec = nullptr;
  const Parameters* params = nullptr;
  std::vector<int64_t> batch_shape;
  std::vector<int64_t> out_shape;
  int64_t in_offset = 0;
  int64_t out_offset = 0;
  int64_t arena_floats = 0;
  std::vector<PlanOp> ops;
  bool canaries = false;
  int64_t canary_violations = 0;
  std::vector<float> arena;  // sized on first execute, then reused

  int64_t arena_bytes() const { return arena_floats * static_cast<int64_t>(sizeof(float)); }
};

// Builds the schedule and arena layout for a fixed batch shape. Shapes must
// be fully static (rank 4, every extent >= 1) or a capability error is
// raised; a batch that does not match the model input raises a shape error.
// Planning is deterministic: same spec/shape -> identical plan.
ExecutionPlan plan(const ModelSpec& spec, const Parameters& params,
                   const std::vector<int64_t>& batch_shape, bool canaries = false);

// Runs the plan on one batch. Matches the eager infer-mode forward bitwise
// (same kernels, same accumulation order); callers should still budget a
// 1e-6 max-abs tolerance. Input must match the planned batch shape.
Tensor execute_planned(ExecutionPlan& plan, const Tensor& input);

enum class BenchMode { Eager, PlannedPercall, PlannedPreinit };

const char* bench_mode_name(BenchMode mode);
BenchMode bench_mode_from(const std::string& name);  // unknown -> parameter error

// Timing summary for one model/mode pair. `seconds` holds the timed
// repetitions (warm-up excluded); fps_i = n_images / seconds_i.
// `normalized_fps` is mean_fps / max(mean_fps) across a report set, filled
// in by normalize_reports (1.0 until then).
struct FpsReport {
  std::string model;
  std::string mode;
  int64_t n_images = 0;
  int64_t runtimes = 0;
  std::vector<double> seconds;
  double mean_fps = 0.0;
  double std_fps = 0.0;  // population std over repetitions
  double normalized_fps = 1.0;
};

// Loads the model, generates n_images seeded random inputs once, then times
// `runtimes` repetitions (plus one discarded warm-up) of pushing all images
// through the requested engine:
//   eager           - per-image graph walk with fresh allocations
//   planned_percall - rebuilds the plan every repetition, then executes
//   planned_preinit - builds the plan once outside the timed region
FpsReport fps_bench(const std::string& model_path, BenchMode mode, int64_t n_images,
                    int64_t runtimes, uint64_t seed);

// Scales normalized_fps so the fastest report in the set gets 1.0.
void normalize_reports(std::vector<FpsReport>& reports);

// `model,mode,n_images,runtimes,mean_fps,std_fps,normalized_fps`, one line
// per report (normalized across the given set); empty set -> header only.
void export_bench_csv(const std::vector<FpsReport>& reports, const std::string& path);

}  // namespace ropnet
