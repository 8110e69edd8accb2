#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "ropnet/error.hpp"
#include "ropnet/model.hpp"
#include "ropnet/rng.hpp"
#include "ropnet/runtime.hpp"

using namespace ropnet;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected a ropnet::Error");
  return ErrorKind::Parameter;
}

Tensor rand_input(const ModelSpec& spec, uint64_t seed, int64_t batch) {
  Tensor t({batch, spec.input_h, spec.input_w, spec.input_c});
  Rng rng(seed);
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<float>(rng.uniform01());
  return t;
}

std::vector<int64_t> input_shape(const ModelSpec& spec, int64_t batch) {
  return {batch, spec.input_h, spec.input_w, spec.input_c};
}

// input plus every non-flatten layer output, i.e. what a no-reuse arena
// would have to hold
int64_t no_reuse_floats(const ModelSpec& spec, int64_t batch) {
  int64_t total = batch * spec.input_h * spec.input_w * spec.input_c;
  const auto shapes = infer_shapes(spec, batch);
  for (size_t i = 0; i < shapes.size(); ++i) {
    if (spec.layers[i].kind == LayerKind::Flatten) continue;
    int64_t n = 1;
    for (int64_t v : shapes[i]) n *= v;
    total += n;
  }
  return total;
}

void check_equivalence(const BuiltModel& m, int64_t batch) {
  ExecutionPlan p = plan(m.spec, m.params, input_shape(m.spec, batch));
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = rand_input(m.spec, 100 + static_cast<uint64_t>(trial), batch);
    const Tensor eager = forward(m.spec, m.params, x);
    const Tensor planned = execute_planned(p, x);
    REQUIRE(eager.shape() == planned.shape());
    double max_abs = 0.0;
    for (int64_t i = 0; i < eager.numel(); ++i) {
      max_abs = std::max(max_abs, std::abs(double(eager[i]) - double(planned[i])));
    }
    CHECK(max_abs <= 1e-6);
    // both engines drive the same kernels in the same order
    CHECK(std::memcmp(eager.data(), planned.data(),
                      static_cast<size_t>(eager.numel()) * sizeof(float)) == 0);
  }
}

}  // namespace

TEST_CASE("planned execution matches eager forward on the custom net") {
  check_equivalence(build_custom_rop_net(64, 0.5, 11), 1);
  check_equivalence(build_custom_rop_net(64, 0.25, 12), 3);
}

TEST_CASE("planned execution matches eager forward on the mobilenet baseline") {
  check_equivalence(build_mobilenet_like(64, 13), 1);
}

TEST_CASE("canary instrumented runs see no corruption") {
  const BuiltModel m = build_custom_rop_net(64, 0.5, 11);
  ExecutionPlan plain = plan(m.spec, m.params, input_shape(m.spec, 1));
  ExecutionPlan guarded = plan(m.spec, m.params, input_shape(m.spec, 1), true);
  CHECK(guarded.canaries);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = rand_input(m.spec, 300 + static_cast<uint64_t>(trial), 1);
    const Tensor a = execute_planned(plain, x);
    const Tensor b = execute_planned(guarded, x);
    CHECK(std::memcmp(a.data(), b.data(), static_cast<size_t>(a.numel()) * sizeof(float)) == 0);
  }
  CHECK(guarded.canary_violations == 0);

  const BuiltModel mb = build_mobilenet_like(64, 14);
  ExecutionPlan gb = plan(mb.spec, mb.params, input_shape(mb.spec, 1), true);
  for (int trial = 0; trial < 20; ++trial) {
    execute_planned(gb, rand_input(mb.spec, 500 + static_cast<uint64_t>(trial), 1));
  }
  CHECK(gb.canary_violations == 0);
}

TEST_CASE("planning is deterministic") {
  const BuiltModel m = build_custom_rop_net(64, 0.5, 11);
  const ExecutionPlan a = plan(m.spec, m.params, input_shape(m.spec, 1));
  const ExecutionPlan b = plan(m.spec, m.params, input_shape(m.spec, 1));
  CHECK(a.arena_floats == b.arena_floats);
  CHECK(a.in_offset == b.in_offset);
  CHECK(a.out_offset == b.out_offset);
  REQUIRE(a.ops.size() == b.ops.size());
  for (size_t i = 0; i < a.ops.size(); ++i) {
    CHECK(a.ops[i].kind == b.ops[i].kind);
    CHECK(a.ops[i].in_offset == b.ops[i].in_offset);
    CHECK(a.ops[i].out_offset == b.ops[i].out_offset);
    CHECK(a.ops[i].out_shape == b.ops[i].out_shape);
  }
}

TEST_CASE("a single-layer model needs exactly input plus output") {
  ModelSpec spec;
  spec.name = "relu-only";
  spec.input_h = 8;
  spec.input_w = 8;
  spec.input_c = 3;
  LayerSpec relu;
  relu.kind = LayerKind::Relu;
  spec.layers.push_back(relu);

  Parameters params;
  const ExecutionPlan p = plan(spec, params, {2, 8, 8, 3});
  CHECK(p.arena_floats == 2 * (2 * 8 * 8 * 3));

  ExecutionPlan run = plan(spec, params, {2, 8, 8, 3});
  Tensor x({2, 8, 8, 3});
  Rng rng(3);
  for (int64_t i = 0; i < x.numel(); ++i) {
    x.data()[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  }
  const Tensor y = execute_planned(run, x);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(y[i] == std::max(0.0f, x[i]));
}

TEST_CASE("the arena reuses freed buffers") {
  const BuiltModel m = build_custom_rop_net(64, 0.5, 11);
  const ExecutionPlan p = plan(m.spec, m.params, input_shape(m.spec, 1));
  CHECK(p.arena_floats < no_reuse_floats(m.spec, 1));

  const BuiltModel mb = build_mobilenet_like(64, 14);
  const ExecutionPlan pb = plan(mb.spec, mb.params, input_shape(mb.spec, 1));
  CHECK(pb.arena_floats < no_reuse_floats(mb.spec, 1));
}

TEST_CASE("flatten is a view, not a copy") {
  const BuiltModel m = build_custom_rop_net(64, 0.5, 11);
  const ExecutionPlan p = plan(m.spec, m.params, input_shape(m.spec, 1));
  bool found = false;
  for (const PlanOp& op : p.ops) {
    if (op.kind == LayerKind::Flatten) {
      found = true;
      CHECK(op.in_offset == op.out_offset);
    }
  }
  CHECK(found);
}

TEST_CASE("repeated execution is bitwise identical") {
  const BuiltModel m = build_custom_rop_net(64, 0.5, 11);
  ExecutionPlan p = plan(m.spec, m.params, input_shape(m.spec, 1));
  const Tensor x = rand_input(m.spec, 7, 1);
  const Tensor a = execute_planned(p, x);
  const Tensor b = execute_planned(p, x);
  CHECK(std::memcmp(a.data(), b.data(), static_cast<size_t>(a.numel()) * sizeof(float)) == 0);
}

TEST_CASE("plan and execute validate shapes") {
  const BuiltModel m = build_custom_rop_net(64, 0.5, 11);
  CHECK(kind_of([&] { plan(m.spec, m.params, {1, 64, 64}); }) == ErrorKind::Capability);
  CHECK(kind_of([&] { plan(m.spec, m.params, {0, 64, 64, 3}); }) == ErrorKind::Capability);
  CHECK(kind_of([&] { plan(m.spec, m.params, {1, 32, 32, 3}); }) == ErrorKind::Shape);

  ModelSpec empty;
  empty.name = "empty";
  empty.input_h = empty.input_w = 8;
  Parameters none;
  CHECK(kind_of([&] { plan(empty, none, {1, 8, 8, 3}); }) == ErrorKind::Capability);

  ExecutionPlan p = plan(m.spec, m.params, input_shape(m.spec, 2));
  const Tensor wrong = rand_input(m.spec, 1, 1);
  CHECK(kind_of([&] { execute_planned(p, wrong); }) == ErrorKind::Shape);
}

TEST_CASE("bench mode names round-trip") {
  CHECK(bench_mode_from("eager") == BenchMode::Eager);
  CHECK(bench_mode_from("planned_percall") == BenchMode::PlannedPercall);
  CHECK(bench_mode_from("planned_preinit") == BenchMode::PlannedPreinit);
  CHECK(std::string(bench_mode_name(BenchMode::PlannedPreinit)) == "planned_preinit");
  CHECK(kind_of([] { bench_mode_from("tflite"); }) == ErrorKind::Parameter);
}

TEST_CASE("fps bench measures throughput for every mode") {
  fs::path dir = fs::temp_directory_path() / "ropnet_runtime_tests";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string model_path = (dir / "bench_model.bin").string();
  const BuiltModel m = build_custom_rop_net(64, 0.25, 3);
  save_model(m.spec, m.params, model_path);

  for (BenchMode mode :
       {BenchMode::Eager, BenchMode::PlannedPercall, BenchMode::PlannedPreinit}) {
    const FpsReport r = fps_bench(model_path, mode, 6, 4, 42);
    CHECK(r.model == m.spec.name);
    CHECK(r.mode == bench_mode_name(mode));
    CHECK(r.n_images == 6);
    CHECK(r.runtimes == 4);
    REQUIRE(r.seconds.size() == 4);
    for (double s : r.seconds) CHECK(6.0 / s > 0.0);
    CHECK(r.mean_fps > 0.0);
    CHECK(r.std_fps >= 0.0);
  }

  CHECK(kind_of([&] { fps_bench(model_path, BenchMode::Eager, 0, 1, 0); }) ==
        ErrorKind::Parameter);
  CHECK(kind_of([&] { fps_bench(model_path, BenchMode::Eager, 1, 0, 0); }) ==
        ErrorKind::Parameter);
}

TEST_CASE("fps measures throughput, not batch latency") {
  fs::path dir = fs::temp_directory_path() / "ropnet_runtime_tests" / "scale";
  fs::create_directories(dir);
  const std::string model_path = (dir / "model.bin").string();
  const BuiltModel m = build_custom_rop_net(64, 0.25, 3);
  save_model(m.spec, m.params, model_path);

  const FpsReport small = fps_bench(model_path, BenchMode::PlannedPreinit, 12, 8, 42);
  const FpsReport big = fps_bench(model_path, BenchMode::PlannedPreinit, 24, 8, 42);
  const double rel = std::abs(big.mean_fps - small.mean_fps) / small.mean_fps;
  CHECK(rel < 0.20);
}

TEST_CASE("bench csv round-trips and normalizes to the fastest mode") {
  fs::path dir = fs::temp_directory_path() / "ropnet_runtime_tests" / "csv";
  fs::create_directories(dir);

  std::vector<FpsReport> reports;
  const char* models[] = {"custom-rop", "mobilenet-like"};
  const char* modes[] = {"eager", "planned_percall", "planned_preinit"};
  double mean = 100.0;
  for (const char* model : models) {
    for (const char* mode : modes) {
      FpsReport r;
      r.model = model;
      r.mode = mode;
      r.n_images = 46;
      r.runtimes = 10;
      r.mean_fps = mean;
      r.std_fps = 1.5;
      mean += 50.0;
      reports.push_back(r);
    }
  }

  const fs::path out = dir / "bench.csv";
  export_bench_csv(reports, out.string());
  std::ifstream f(out);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) lines.push_back(line);
  REQUIRE(lines.size() == 7);
  CHECK(lines[0] == "model,mode,n_images,runtimes,mean_fps,std_fps,normalized_fps");

  double max_norm = 0.0;
  for (size_t i = 1; i < lines.size(); ++i) {
    std::stringstream ss(lines[i]);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    REQUIRE(fields.size() == 7);
    CHECK(fields[0] == reports[i - 1].model);
    CHECK(fields[1] == reports[i - 1].mode);
    CHECK(std::stoll(fields[2]) == 46);
    CHECK(std::stoll(fields[3]) == 10);
    CHECK(std::stod(fields[4]) == doctest::Approx(reports[i - 1].mean_fps).epsilon(1e-9));
    const double norm = std::stod(fields[6]);
    CHECK(norm > 0.0);
    CHECK(norm <= 1.0);
    max_norm = std::max(max_norm, norm);
  }
  CHECK(max_norm == 1.0);  // the fastest row defines the scale

  // the exported copy is normalized, the caller's reports are untouched
  CHECK(reports[0].normalized_fps == 1.0);

  export_bench_csv({}, out.string());
  std::ifstream f2(out);
  lines.clear();
  while (std::getline(f2, line)) lines.push_back(line);
  REQUIRE(lines.size() == 1);
  CHECK(lines[0] == "model,mode,n_images,runtimes,mean_fps,std_fps,normalized_fps");

  CHECK(kind_of([&] { export_bench_csv(reports, "/nonexistent/dir/b.csv"); }) == ErrorKind::Io);
}

TEST_CASE("normalize_reports scales in place") {
  std::vector<FpsReport> reports(3);
  reports[0].mean_fps = 50.0;
  reports[1].mean_fps = 200.0;
  reports[2].mean_fps = 100.0;
  normalize_reports(reports);
  CHECK(reports[0].normalized_fps == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(reports[1].normalized_fps == 1.0);
  CHECK(reports[2].normalized_fps == doctest::Approx(0.5).epsilon(1e-12));
}
