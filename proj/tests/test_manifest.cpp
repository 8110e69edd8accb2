#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ropnet/data.hpp"
#include "ropnet/error.hpp"
#include "ropnet/image.hpp"
#include "ropnet/kernels.hpp"
#include "ropnet/synth.hpp"

using namespace ropnet;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / "ropnet_manifest_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  REQUIRE(f.good());
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Parameter;
}

ImageRecord rec(std::string path, std::string pid, Eye e, int label, Quality q,
                SplitTag s = SplitTag::Unassigned) {
  ImageRecord r;
  r.path = std::move(path);
  r.patient_id = std::move(pid);
  r.eye = e;
  r.label = label;
  r.quality = q;
  r.split = s;
  return r;
}

// a tiny PPM with the given dims; `tweak` differentiates pixel content
void write_ppm_file(const fs::path& p, int64_t h, int64_t w, int tweak) {
  RawImage img;
  img.height = h;
  img.width = w;
  img.pixels.resize(static_cast<size_t>(h * w * 3));
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    img.pixels[i] = static_cast<uint8_t>((i * 31 + static_cast<size_t>(tweak) * 7 + 3) % 256);
  }
  save_ppm(img, p.string());
}

}  // namespace

TEST_CASE("manifest csv roundtrips") {
  const fs::path dir = fresh_dir("roundtrip");
  Manifest m;
  m.dir = dir.string();
  m.records.push_back(rec("a/im0.ppm", "p01", Eye::L, 1, Quality::High, SplitTag::Train));
  m.records.push_back(rec("im1.ppm", "p01", Eye::R, 0, Quality::Low, SplitTag::Test));
  m.records.push_back(rec("im2.ppm", "p02", Eye::L, 0, Quality::High, SplitTag::Unassigned));
  const fs::path file = dir / "manifest.csv";
  save_manifest(m, file.string());

  const Manifest back = load_manifest(file.string());
  CHECK(back.dir == dir.string());
  REQUIRE(back.records.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(back.records[i].path == m.records[i].path);
    CHECK(back.records[i].patient_id == m.records[i].patient_id);
    CHECK(back.records[i].eye == m.records[i].eye);
    CHECK(back.records[i].label == m.records[i].label);
    CHECK(back.records[i].quality == m.records[i].quality);
    CHECK(back.records[i].split == m.records[i].split);
  }
  // deterministic writer: line endings are LF and a rewrite is byte-identical
  const std::string bytes = slurp(file);
  CHECK(bytes.find('\r') == std::string::npos);
  save_manifest(back, (dir / "again.csv").string());
  CHECK(slurp(dir / "again.csv") == bytes);
}

TEST_CASE("manifest paths resolve relative to the manifest directory") {
  Manifest m;
  m.dir = "/data/set";
  CHECK(record_abs_path(m, rec("x/y.ppm", "p", Eye::L, 0, Quality::High)) == "/data/set/x/y.ppm");
  CHECK(record_abs_path(m, rec("/abs/y.ppm", "p", Eye::L, 0, Quality::High)) == "/abs/y.ppm");
}

TEST_CASE("manifest loader flags malformed csv with line numbers") {
  const fs::path dir = fresh_dir("badcsv");
  const std::string header = "path,patient_id,eye,label,quality,split\n";
  const auto try_load = [&](const std::string& name, const std::string& body) {
    const fs::path p = dir / name;
    spit(p, body);
    try {
      load_manifest(p.string());
    } catch (const Error& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(try_load("head.csv", "path,patient\nim,p,L,0,high,train\n") != "");
  CHECK(try_load("fields.csv", header + "im,p,L,0,high\n").find("line 2") != std::string::npos);
  CHECK(try_load("label.csv", header + "im,p,L,x,high,train\n").find("label") !=
        std::string::npos);
  CHECK(try_load("eye.csv", header + "im,p,Q,0,high,train\n").find("eye") != std::string::npos);
  CHECK(try_load("quality.csv", header + "im,p,L,0,medium,train\n").find("quality") !=
        std::string::npos);
  CHECK(try_load("split.csv", header + "im,p,L,0,high,holdout\n").find("split") !=
        std::string::npos);
  CHECK(try_load("dup.csv", header + "im,p,L,0,high,train\nim,q,R,1,low,test\n").find("im") !=
        std::string::npos);
  CHECK(try_load("nopath.csv", header + ",p,L,0,high,train\n") != "");
  // all of the above are format errors
  spit(dir / "kind.csv", header + "im,p,L,0,high\n");
  CHECK(kind_of([&] { load_manifest((dir / "kind.csv").string()); }) == ErrorKind::Format);
}

TEST_CASE("manifest loader tolerates crlf and blank lines") {
  const fs::path dir = fresh_dir("crlf");
  spit(dir / "m.csv",
       "path,patient_id,eye,label,quality,split\r\n\r\nim0.ppm,p0,L,1,low,train\r\n");
  const Manifest m = load_manifest((dir / "m.csv").string());
  REQUIRE(m.records.size() == 1);
  CHECK(m.records[0].path == "im0.ppm");
  CHECK(m.records[0].label == 1);
}

TEST_CASE("clean rejects bad records with one reason each") {
  const fs::path dir = fresh_dir("clean");
  write_ppm_file(dir / "good_high.ppm", kHighQualityH, kHighQualityW, 0);
  write_ppm_file(dir / "good_low.ppm", kLowQualityH, kLowQualityW, 1);
  write_ppm_file(dir / "wrong_dims.ppm", 100, 120, 2);
  write_ppm_file(dir / "dupe.ppm", kHighQualityH, kHighQualityW, 0);  // same bytes as good_high
  spit(dir / "broken.ppm", "P6\n480 640\n255\nnot enough bytes");

  Manifest m;
  m.dir = dir.string();
  m.records.push_back(rec("good_high.ppm", "p0", Eye::L, 1, Quality::High));
  m.records.push_back(rec("bad_label.ppm", "p0", Eye::R, 7, Quality::High));
  m.records.push_back(rec("broken.ppm", "p1", Eye::L, 0, Quality::High));
  m.records.push_back(rec("missing.ppm", "p1", Eye::R, 0, Quality::High));
  m.records.push_back(rec("wrong_dims.ppm", "p2", Eye::L, 1, Quality::High));
  m.records.push_back(rec("good_low.ppm", "p2", Eye::R, 0, Quality::Low));
  m.records.push_back(rec("dupe.ppm", "p3", Eye::L, 1, Quality::High));

  const CleanResult res = clean_manifest(m);
  REQUIRE(res.manifest.records.size() == 2);
  CHECK(res.manifest.records[0].path == "good_high.ppm");
  CHECK(res.manifest.records[1].path == "good_low.ppm");
  std::map<std::string, std::string> reasons;
  for (const auto& rej : res.rejected) reasons[rej.path] = rej.reason;
  REQUIRE(reasons.size() == 5);
  CHECK(reasons["bad_label.ppm"] == "label");
  CHECK(reasons["broken.ppm"] == "corrupt");
  CHECK(reasons["missing.ppm"] == "corrupt");
  CHECK(reasons["wrong_dims.ppm"] == "dimensions");
  CHECK(reasons["dupe.ppm"] == "duplicate");

  // cleaning survivors again rejects nothing
  const CleanResult again = clean_manifest(res.manifest);
  CHECK(again.rejected.empty());
  CHECK(again.manifest.records.size() == 2);
}

TEST_CASE("clean rejects a low-tier image with high-tier dimensions") {
  const fs::path dir = fresh_dir("tier");
  write_ppm_file(dir / "im.ppm", kHighQualityH, kHighQualityW, 0);
  Manifest m;
  m.dir = dir.string();
  m.records.push_back(rec("im.ppm", "p0", Eye::L, 0, Quality::Low));
  const CleanResult res = clean_manifest(m);
  REQUIRE(res.rejected.size() == 1);
  CHECK(res.rejected[0].reason == "dimensions");
}

namespace {

// n_patients x 2 eyes x per_eye records, no files behind them (split needs none)
Manifest grouped_manifest(int n_patients, int per_eye) {
  Manifest m;
  for (int p = 0; p < n_patients; ++p) {
    for (int e = 0; e < 2; ++e) {
      for (int i = 0; i < per_eye; ++i) {
        const std::string pid = "p" + std::to_string(p);
        const std::string name =
            pid + (e == 0 ? "_L_" : "_R_") + std::to_string(i) + ".ppm";
        m.records.push_back(rec(name, pid, e == 0 ? Eye::L : Eye::R, (p + e) % 2,
                                i % 2 == 0 ? Quality::High : Quality::Low));
      }
    }
  }
  return m;
}

std::string group_key(const ImageRecord& r) {
  return r.patient_id + "|" + (r.eye == Eye::L ? "L" : "R");
}

}  // namespace

TEST_CASE("split keeps every patient-eye group on one side") {
  for (const double fraction : {0.2, 0.3}) {
    for (uint64_t seed = 0; seed < 20; ++seed) {
      const Manifest m = grouped_manifest(12, 3);
      const Manifest out = split(m, fraction, seed);
      REQUIRE(out.records.size() == m.records.size());

      std::map<std::string, std::set<SplitTag>> sides;
      int64_t test_count = 0;
      for (const auto& r : out.records) {
        CHECK(r.split != SplitTag::Unassigned);
        sides[group_key(r)].insert(r.split);
        test_count += r.split == SplitTag::Test;
      }
      for (const auto& [key, tags] : sides) {
        INFO("group ", key, " seed ", seed);
        CHECK(tags.size() == 1);
      }
      // greedy whole-group assignment: overshoot bounded by one group
      const double target = fraction * static_cast<double>(m.records.size());
      const int64_t group_size = 3;
      CHECK(static_cast<double>(test_count) >= target);
      CHECK(static_cast<double>(test_count) < target + static_cast<double>(group_size));
      // both sides populated
      CHECK(test_count > 0);
      CHECK(test_count < static_cast<int64_t>(out.records.size()));
    }
  }
}

TEST_CASE("split is deterministic per seed and varies across seeds") {
  const Manifest m = grouped_manifest(10, 2);
  const auto assignment = [&](uint64_t seed) {
    std::string s;
    for (const auto& r : split(m, 0.3, seed).records) s += r.split == SplitTag::Test ? 'T' : 't';
    return s;
  };
  CHECK(assignment(5) == assignment(5));
  std::set<std::string> distinct;
  for (uint64_t seed = 0; seed < 20; ++seed) distinct.insert(assignment(seed));
  CHECK(distinct.size() >= 2);
}

TEST_CASE("split refuses degenerate inputs") {
  Manifest one;
  one.records.push_back(rec("a.ppm", "p0", Eye::L, 0, Quality::High));
  one.records.push_back(rec("b.ppm", "p0", Eye::L, 1, Quality::High));
  CHECK(kind_of([&] { split(one, 0.3, 1); }) == ErrorKind::Split);

  const Manifest m = grouped_manifest(3, 1);
  CHECK(kind_of([&] { split(m, 0.0, 1); }) == ErrorKind::Parameter);
  CHECK(kind_of([&] { split(m, 1.0, 1); }) == ErrorKind::Parameter);
  CHECK(kind_of([&] { split(m, -0.2, 1); }) == ErrorKind::Parameter);

  // a fraction so high every group lands in test must fail, not starve train
  Manifest two;
  two.records.push_back(rec("a.ppm", "p0", Eye::L, 0, Quality::High));
  two.records.push_back(rec("b.ppm", "p1", Eye::L, 1, Quality::High));
  CHECK(kind_of([&] { split(two, 0.99, 1); }) == ErrorKind::Split);
}

TEST_CASE("filter_split selects exactly the tagged records") {
  Manifest m = grouped_manifest(4, 2);
  const Manifest out = split(m, 0.3, 9);
  const Manifest test = filter_split(out, SplitTag::Test);
  const Manifest train = filter_split(out, SplitTag::Train);
  CHECK(test.records.size() + train.records.size() == out.records.size());
  for (const auto& r : test.records) CHECK(r.split == SplitTag::Test);
  for (const auto& r : train.records) CHECK(r.split == SplitTag::Train);
}

TEST_CASE("weighted sampling hits the configured quality ratio") {
  Manifest m;
  m.records.push_back(rec("l0.ppm", "p0", Eye::L, 0, Quality::Low));
  m.records.push_back(rec("h0.ppm", "p0", Eye::R, 0, Quality::High));
  m.records.push_back(rec("l1.ppm", "p1", Eye::L, 0, Quality::Low));
  m.records.push_back(rec("h1.ppm", "p1", Eye::R, 0, Quality::High));
  m.records.push_back(rec("l2.ppm", "p2", Eye::L, 0, Quality::Low));

  WeightedSampler sampler(m, 2.0, 1.0, 42);
  const int n = 100000;
  std::vector<int64_t> counts(m.records.size(), 0);
  int64_t low = 0;
  for (int i = 0; i < n; ++i) {
    const int64_t idx = sampler.next();
    REQUIRE(idx >= 0);
    REQUIRE(idx < static_cast<int64_t>(m.records.size()));
    ++counts[static_cast<size_t>(idx)];
    low += m.records[static_cast<size_t>(idx)].quality == Quality::Low;
  }
  // 3 low at weight 2 vs 2 high at weight 1: expect 6/8 of draws low
  CHECK(std::abs(static_cast<double>(low) / n - 0.75) < 0.01);
  // every record reachable
  for (const int64_t c : counts) CHECK(c > 0);
}

TEST_CASE("uniform weights sample uniformly") {
  Manifest m;
  for (int i = 0; i < 20; ++i) {
    m.records.push_back(rec("im" + std::to_string(i) + ".ppm", "p" + std::to_string(i), Eye::L,
                            0, Quality::High));
  }
  WeightedSampler sampler(m, 1.0, 1.0, 7);
  const int n = 100000;
  std::vector<double> counts(20, 0.0);
  for (int i = 0; i < n; ++i) counts[static_cast<size_t>(sampler.next())] += 1.0;
  const double expected = n / 20.0;
  double chi2 = 0.0;
  for (const double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // 1% critical value for 19 degrees of freedom
  CHECK(chi2 < 36.19);
}

TEST_CASE("sampler reproduces its stream per seed") {
  const Manifest m = grouped_manifest(5, 2);
  WeightedSampler a(m, 2.0, 1.0, 99);
  WeightedSampler b(m, 2.0, 1.0, 99);
  for (int i = 0; i < 50; ++i) CHECK(a.next() == b.next());
}

TEST_CASE("sampler validates weights and input") {
  const Manifest m = grouped_manifest(2, 1);
  CHECK(kind_of([&] { WeightedSampler(m, 0.0, 1.0, 1); }) == ErrorKind::Parameter);
  CHECK(kind_of([&] { WeightedSampler(m, 1.0, -2.0, 1); }) == ErrorKind::Parameter);
  CHECK(kind_of([&] { WeightedSampler(Manifest{}, 1.0, 1.0, 1); }) == ErrorKind::Parameter);
}

TEST_CASE("synthetic datasets have the promised composition") {
  const fs::path dir = fresh_dir("synth_comp");
  SynthConfig cfg;
  cfg.n_patients = 5;
  cfg.images_per_eye = 3;
  cfg.positive_rate = 0.5;
  cfg.quality_mix = 0.5;
  cfg.seed = 11;
  const Manifest m = synth_generate(cfg, dir.string());
  REQUIRE(m.records.size() == 30);

  // the manifest written alongside matches what was returned
  const Manifest disk = load_manifest((dir / "manifest.csv").string());
  REQUIRE(disk.records.size() == 30);
  for (size_t i = 0; i < 30; ++i) {
    CHECK(disk.records[i].path == m.records[i].path);
    CHECK(disk.records[i].label == m.records[i].label);
    CHECK(disk.records[i].quality == m.records[i].quality);
    CHECK(disk.records[i].split == SplitTag::Unassigned);
  }

  // labels are a property of the eye, not the image
  std::map<std::string, std::set<int>> labels_by_eye;
  for (const auto& r : m.records) labels_by_eye[group_key(r)].insert(r.label);
  CHECK(labels_by_eye.size() == 10);
  for (const auto& [key, labels] : labels_by_eye) CHECK(labels.size() == 1);

  // every file exists with the dimensions its tier promises, so clean keeps all
  const CleanResult res = clean_manifest(m);
  CHECK(res.rejected.empty());
  CHECK(res.manifest.records.size() == 30);
}

TEST_CASE("synthetic labels follow the positive rate at the extremes") {
  const fs::path zero = fresh_dir("synth_zero");
  SynthConfig cfg;
  cfg.n_patients = 3;
  cfg.images_per_eye = 1;
  cfg.quality_mix = 0.0;
  cfg.seed = 2;
  cfg.positive_rate = 0.0;
  for (const auto& r : synth_generate(cfg, zero.string()).records) CHECK(r.label == 0);
  const fs::path ones = fresh_dir("synth_one");
  cfg.positive_rate = 1.0;
  for (const auto& r : synth_generate(cfg, ones.string()).records) CHECK(r.label == 1);
}

TEST_CASE("synthesis is byte-deterministic, including across thread counts") {
  SynthConfig cfg;
  cfg.n_patients = 2;
  cfg.images_per_eye = 2;
  cfg.positive_rate = 0.5;
  cfg.quality_mix = 0.4;
  cfg.seed = 31;

  const fs::path a = fresh_dir("synth_det_a");
  const fs::path b = fresh_dir("synth_det_b");
  const int before = kern::threads();
  synth_generate(cfg, a.string());
  kern::set_threads(4);
  synth_generate(cfg, b.string());
  kern::set_threads(before);

  CHECK(slurp(a / "manifest.csv") == slurp(b / "manifest.csv"));
  for (const auto& r : load_manifest((a / "manifest.csv").string()).records) {
    CHECK(slurp(a / r.path) == slurp(b / r.path));
  }
}

TEST_CASE("synthesis validates its configuration") {
  SynthConfig cfg;
  cfg.n_patients = 0;
  CHECK(kind_of([&] { synth_generate(cfg, "/tmp/ropnet_never"); }) == ErrorKind::Parameter);
  cfg.n_patients = 1;
  cfg.positive_rate = 1.5;
  CHECK(kind_of([&] { synth_generate(cfg, "/tmp/ropnet_never"); }) == ErrorKind::Parameter);
}

TEST_CASE("augmenting a dataset multiplies it by one plus the op count") {
  const fs::path src = fresh_dir("augment_src");
  Manifest m;
  m.dir = src.string();
  for (int i = 0; i < 3; ++i) {
    write_ppm_file(src / ("im" + std::to_string(i) + ".ppm"), 12, 10, i);
    m.records.push_back(rec("im" + std::to_string(i) + ".ppm", "p0" + std::to_string(i),
                            i % 2 ? Eye::R : Eye::L, i % 2, i % 2 ? Quality::Low : Quality::High,
                            SplitTag::Train));
  }

  const fs::path out = fresh_dir("augment_out");
  const std::vector<AugOp> ops = {AugOp::Rot90, AugOp::FlipH, AugOp::Contrast};
  const Manifest aug = augment_dataset(m, ops, out.string());
  REQUIRE(aug.records.size() == 3 * (1 + 3));
  CHECK(aug.dir == out.string());

  for (size_t i = 0; i < aug.records.size(); ++i) {
    const ImageRecord& base = m.records[i / 4];
    const ImageRecord& r = aug.records[i];
    CHECK(r.label == base.label);
    CHECK(r.patient_id == base.patient_id);
    CHECK(r.eye == base.eye);
    CHECK(r.quality == base.quality);
    CHECK(r.split == base.split);
    if (i % 4 == 0) {
      CHECK(fs::path(r.path).is_absolute());  // originals stay where they are
    } else {
      const RawImage img = load_ppm(record_abs_path(aug, r));
      const AugOp op = ops[i % 4 - 1];
      if (op == AugOp::Rot90) {
        CHECK(img.height == 10);  // quarter turns swap the axes
        CHECK(img.width == 12);
      } else {
        CHECK(img.height == 12);
        CHECK(img.width == 10);
      }
    }
  }

  // geometric variants are byte-exact transforms of the source
  const Tensor src0 = normalize(load_ppm(record_abs_path(aug, aug.records[0])));
  const RawImage rot = load_ppm(record_abs_path(aug, aug.records[1]));
  const RawImage want = to_raw(augment(src0, AugOp::Rot90));
  CHECK(rot.pixels == want.pixels);

  // the manifest on disk matches the returned one
  const Manifest disk = load_manifest((out / "manifest.csv").string());
  REQUIRE(disk.records.size() == aug.records.size());
  for (size_t i = 0; i < disk.records.size(); ++i) {
    CHECK(disk.records[i].path == aug.records[i].path);
  }

  // a second run into a disjoint out_dir collides with nothing
  const fs::path out2 = fresh_dir("augment_out2");
  const Manifest aug2 = augment_dataset(m, ops, out2.string());
  for (size_t i = 0; i < aug.records.size(); ++i) {
    if (i % 4 == 0) continue;
    CHECK(record_abs_path(aug, aug.records[i]) != record_abs_path(aug2, aug2.records[i]));
    CHECK(fs::exists(record_abs_path(aug2, aug2.records[i])));
  }

  CHECK(kind_of([&] { augment_dataset(m, {}, out.string()); }) == ErrorKind::Parameter);
  CHECK(kind_of([&] { augment_dataset(Manifest{}, ops, out.string()); }) == ErrorKind::Data);
  const fs::path blocker = fresh_dir("augment_blocked") / "file";
  spit(blocker, "x");
  CHECK(kind_of([&] { augment_dataset(m, ops, (blocker / "sub").string()); }) == ErrorKind::Io);
}
