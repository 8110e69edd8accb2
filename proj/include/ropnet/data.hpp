#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ropnet/image.hpp"
#include "ropnet/rng.hpp"
#include "ropnet/tensor.hpp"

namespace ropnet {

enum class Eye { L, R };
enum class Quality { High, Low };
enum class SplitTag { Train, Test, Unassigned };

const char* eye_name(Eye e);
Eye eye_from(const std::string& s);
const char* quality_name(Quality q);
Quality quality_from(const std::string& s);
const char* split_name(SplitTag s);
SplitTag split_from(const std::string& s);

// the quality tiers carry a dimensional contract checked during cleaning
constexpr int64_t kHighQualityH = 480, kHighQualityW = 640;
constexpr int64_t kLowQualityH = 1200, kLowQualityW = 1600;

struct ImageRecord {
  std::string path;  // relative to the manifest's directory (or absolute)
  std::string patient_id;
  Eye eye = Eye::L;
  int label = 0;  // 1 = positive
  Quality quality = Quality::High;
  SplitTag split = SplitTag::Unassigned;
};

struct Manifest {
  std::string dir;  // directory resolving relative record paths
  std::vector<ImageRecord> records;
};

std::string record_abs_path(const Manifest& m, const ImageRecord& r);

// CSV with header path,patient_id,eye,label,quality,split; LF line endings
Manifest load_manifest(const std::string& path);
void save_manifest(const Manifest& m, const std::string& path);

struct Rejection {
  std::string path;
  std::string reason;  // corrupt | dimensions | label | duplicate
};

struct CleanResult {
  Manifest manifest;
  std::vector<Rejection> rejected;
};

// drops unreadable/corrupt files, tier-dimension mismatches, non-binary
// labels and pixel-content duplicates (first occurrence wins)
CleanResult clean_manifest(const Manifest& m);

// Writes one augmented copy per (record, op) into out_dir and returns a
// manifest of originals plus variants, each original directly followed by
// its variants with label/patient/eye/quality/split inherited. Also saves
// out_dir/manifest.csv. Original rows keep resolving to their source files.
Manifest augment_dataset(const Manifest& m, const std::vector<AugOp>& ops,
                         const std::string& out_dir);

// whole (patient_id, eye) groups are shuffled by seed and assigned to the
// test split until its image count reaches fraction*total; the rest train
Manifest split(const Manifest& m, double test_fraction, uint64_t seed);

Manifest filter_split(const Manifest& m, SplitTag tag);

// i.i.d. record draws weighted by quality tier, deterministic per seed
class WeightedSampler {
 public:
  WeightedSampler(const Manifest& m, double weight_low, double weight_high, uint64_t seed);

  int64_t next();  // index into the manifest it was built from

 private:
  std::vector<double> cum_;
  double total_ = 0.0;
  Rng rng_;
};

}  // namespace ropnet
