#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <string>

#include "ropnet/model.hpp"
#include "ropnet/rng.hpp"

using namespace ropnet;

namespace {

// analytic parameter-count formula, written out independently of the builder
struct ExpectedCounts {
  int64_t trainable = 0;
  int64_t total = 0;
};

ExpectedCounts custom_net_expected(int64_t input, double w) {
  ExpectedCounts e;
  int64_t cin = 3;
  int64_t bn_channels = 0;
  for (int64_t base : {16, 32, 64}) {
    const int64_t c = std::max<int64_t>(1, std::llround(base * w));
    e.trainable += 3 * 3 * cin * c;  // conv stride 1, no bias
    e.trainable += 2 * c;            // bn gamma+beta
    e.trainable += 3 * 3 * c * c;    // conv stride 2
    e.trainable += 2 * c;
    bn_channels += 2 * c;
    cin = c;
  }
  const int64_t feat = (input / 8) * (input / 8) * cin;
  e.trainable += feat * 160 + 160;  // dense(160)
  e.trainable += 160 * 1 + 1;       // dense(1)
  e.total = e.trainable + 2 * bn_channels;  // running mean/var
  return e;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(bool(f));
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

Tensor random_batch(uint64_t seed, int64_t n, int64_t hw) {
  Rng rng(seed);
  Tensor x({n, hw, hw, 3});
  for (int64_t i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(rng.uniform01());
  return x;
}

}  // namespace

TEST_CASE("custom net parameter counts match the analytic formula") {
  for (int64_t input : {64, 128, 224}) {
    for (double w : {1.0, 0.5, 0.25}) {
      auto m = build_custom_rop_net(input, w, 7);
      const auto got = count_parameters(m.params);
      const auto want = custom_net_expected(input, w);
      CHECK(got.trainable == want.trainable);
      CHECK(got.total == want.total);
    }
  }
  // spot value, worked out by hand for the widest 64px configuration
  const auto m = build_custom_rop_net(64, 1.0, 7);
  const auto c = count_parameters(m.params);
  CHECK(c.trainable == 727985);
  CHECK(c.total == 728433);
}

TEST_CASE("custom net topology: 160-wide penultimate features, [N,1] output") {
  for (int64_t input : {64, 128, 224}) {
    for (double w : {1.0, 0.5, 0.25}) {
      auto m = build_custom_rop_net(input, w, 3);
      const auto shapes = infer_shapes(m.spec, 4);
      CHECK(shapes.back() == std::vector<int64_t>{4, 1});
      // the dense(160) output is the feature vector every config exposes
      bool saw160 = false;
      for (size_t i = 0; i < m.spec.layers.size(); ++i) {
        if (m.spec.layers[i].kind == LayerKind::Dense && m.spec.layers[i].units == 160) {
          saw160 = true;
          CHECK(shapes[i] == std::vector<int64_t>{4, 160});
        }
      }
      CHECK(saw160);
    }
  }
  // w=1.0 input 64: flatten feeds 8*8*64 = 4096 into dense(160)
  auto m = build_custom_rop_net(64, 1.0, 3);
  CHECK(m.params.at("l19.weight").shape() == std::vector<int64_t>{4096, 160});
}

TEST_CASE("builders are deterministic in the seed") {
  auto a = build_custom_rop_net(64, 0.5, 11);
  auto b = build_custom_rop_net(64, 0.5, 11);
  auto c = build_custom_rop_net(64, 0.5, 12);
  REQUIRE(a.params.names() == b.params.names());
  bool all_equal = true, any_diff = false;
  for (const auto& n : a.params.names()) {
    const auto& ta = a.params.at(n);
    all_equal &= (ta.values() == b.params.at(n).values());
    any_diff |= (ta.values() != c.params.at(n).values());
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("parameter counts shrink monotonically with the width multiplier") {
  const auto c100 = count_parameters(build_custom_rop_net(64, 1.0, 1).params);
  const auto c050 = count_parameters(build_custom_rop_net(64, 0.5, 1).params);
  const auto c025 = count_parameters(build_custom_rop_net(64, 0.25, 1).params);
  CHECK(c100.trainable > c050.trainable);
  CHECK(c050.trainable > c025.trainable);
}

TEST_CASE("builder input validation") {
  CHECK_THROWS_AS(build_custom_rop_net(100, 1.0, 1), Error);
  CHECK_THROWS_AS(build_custom_rop_net(64, 0.3, 1), Error);
  CHECK_THROWS_AS(build_mobilenet_like(96, 1), Error);
  try {
    build_custom_rop_net(100, 1.0, 1);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Parameter);
  }
}

TEST_CASE("forward output lies in (0,1) and infer mode is pure") {
  auto m = build_custom_rop_net(64, 0.25, 21);
  const Tensor x = random_batch(5, 3, 64);
  const Tensor y1 = forward(m.spec, std::as_const(m.params), x);
  const Tensor y2 = forward(m.spec, std::as_const(m.params), x);
  REQUIRE(y1.shape() == std::vector<int64_t>{3, 1});
  for (int64_t i = 0; i < y1.numel(); ++i) {
    CHECK(y1[i] > 0.0f);
    CHECK(y1[i] < 1.0f);
    CHECK(y1[i] == y2[i]);  // bitwise purity
  }
}

TEST_CASE("infer-mode prediction does not depend on batch composition") {
  auto m = build_custom_rop_net(64, 0.25, 33);
  const Tensor batch = random_batch(9, 4, 64);
  const Tensor by = forward(m.spec, std::as_const(m.params), batch);
  for (int64_t i = 0; i < 4; ++i) {
    Tensor one({1, 64, 64, 3});
    std::copy(batch.data() + i * one.numel(), batch.data() + (i + 1) * one.numel(), one.data());
    const Tensor oy = forward(m.spec, std::as_const(m.params), one);
    CHECK(std::abs(oy[0] - by[i]) < 1e-6f);
  }
}

TEST_CASE("train-mode forward moves the running statistics, infer does not") {
  auto m = build_custom_rop_net(64, 0.25, 2);
  const Tensor x = random_batch(1, 2, 64);
  const auto rm_before = m.params.at("l1.running_mean").values();
  forward(m.spec, std::as_const(m.params), x);
  CHECK(m.params.at("l1.running_mean").values() == rm_before);
  forward(m.spec, m.params, x, BatchNormMode::Train);
  CHECK(m.params.at("l1.running_mean").values() != rm_before);
}

TEST_CASE("mobilenet-like baseline") {
  auto m = build_mobilenet_like(224, 17);
  bool has_depthwise = false, has_pointwise = false;
  for (const auto& l : m.spec.layers) {
    has_depthwise |= l.kind == LayerKind::DepthwiseConv;
    has_pointwise |= l.kind == LayerKind::Conv && l.conv.kernel_h == 1 && l.conv.kernel_w == 1;
  }
  CHECK(has_depthwise);
  CHECK(has_pointwise);

  auto m2 = build_mobilenet_like(224, 17);
  bool same = true;
  for (const auto& n : m.params.names()) same &= m.params.at(n).values() == m2.params.at(n).values();
  CHECK(same);

  const Tensor x = random_batch(4, 1, 224);
  const Tensor y = forward(m.spec, std::as_const(m.params), x);
  REQUIRE(y.shape() == std::vector<int64_t>{1, 1});
  CHECK(std::isfinite(y[0]));
  CHECK(y[0] > 0.0f);
  CHECK(y[0] < 1.0f);
}

TEST_CASE("model file roundtrip is byte identical") {
  const std::string p1 = "build_test_model_a.bin";
  const std::string p2 = "build_test_model_b.bin";
  auto m = build_custom_rop_net(64, 0.5, 99);
  // dirty the running stats so non-default values are exercised
  const Tensor x = random_batch(3, 2, 64);
  forward(m.spec, m.params, x, BatchNormMode::Train);

  save_model(m.spec, m.params, p1);
  auto loaded = load_model(p1);
  save_model(loaded.spec, loaded.params, p2);
  CHECK(read_file(p1) == read_file(p2));

  const Tensor before = forward(m.spec, std::as_const(m.params), x);
  const Tensor after = forward(loaded.spec, std::as_const(loaded.params), x);
  CHECK(before.values() == after.values());

  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("model loader rejects damaged files") {
  const std::string path = "build_test_model_c.bin";
  auto m = build_custom_rop_net(64, 0.25, 1);
  save_model(m.spec, m.params, path);
  std::string bytes = read_file(path);

  const auto write_and_try = [&](const std::string& data) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(data.data(), static_cast<std::streamsize>(data.size()));
    f.close();
    try {
      load_model(path);
      return std::string("no error");
    } catch (const Error& e) {
      return std::string(e.kind() == ErrorKind::Format ? "format" : "other");
    }
  };

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK(write_and_try(bad_magic) == "format");

  std::string bad_version = bytes;
  bad_version[4] = 9;
  CHECK(write_and_try(bad_version) == "format");

  CHECK(write_and_try(bytes.substr(0, bytes.size() / 2)) == "format");
  CHECK(write_and_try(bytes.substr(0, 3)) == "format");
  CHECK(write_and_try(bytes + "zzz") == "format");

  std::remove(path.c_str());
}

TEST_CASE("shape inference rejects malformed layer chains") {
  ModelSpec s;
  s.name = "broken";
  s.input_h = s.input_w = 8;
  s.input_c = 3;
  LayerSpec dense;
  dense.kind = LayerKind::Dense;
  dense.units = 1;
  s.layers.push_back(dense);  // dense on rank-4 input
  CHECK_THROWS_AS(infer_shapes(s, 1), Error);

  ModelSpec s2 = s;
  s2.layers.clear();
  LayerSpec fl;
  fl.kind = LayerKind::Flatten;
  s2.layers.push_back(fl);
  s2.layers.push_back(dense);
  CHECK_NOTHROW(infer_shapes(s2, 1));

  // ends at [N,192], not [N,1]
  ModelSpec s3 = s2;
  s3.layers.pop_back();
  CHECK_THROWS_AS(infer_shapes(s3, 1), Error);
}
