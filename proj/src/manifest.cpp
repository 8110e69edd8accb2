#include "ropnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "ropnet/image.hpp"

namespace fs = std::filesystem;

namespace ropnet {

const char* eye_name(Eye e) { return e == Eye::L ? "L" : "R"; }

Eye eye_from(const std::string& s) {
  if (s == "L") return Eye::L;
  if (s == "R") return Eye::R;
  raise(ErrorKind::Format, "eye must be L or R, got '" + s + "'");
}

const char* quality_name(Quality q) { return q == Quality::High ? "high" : "low"; }

Quality quality_from(const std::string& s) {
  if (s == "high") return Quality::High;
  if (s == "low") return Quality::Low;
  raise(ErrorKind::Format, "quality must be high or low, got '" + s + "'");
}

const char* split_name(SplitTag s) {
  switch (s) {
    case SplitTag::Train: return "train";
    case SplitTag::Test: return "test";
    case SplitTag::Unassigned: return "unassigned";
  }
  raise(ErrorKind::Parameter, "bad split tag");
}

SplitTag split_from(const std::string& s) {
  if (s == "train") return SplitTag::Train;
  if (s == "test") return SplitTag::Test;
  if (s == "unassigned") return SplitTag::Unassigned;
  raise(ErrorKind::Format, "split must be train, test or unassigned, got '" + s + "'");
}

std::string record_abs_path(const Manifest& m, const ImageRecord& r) {
  fs::path p(r.path);
  if (p.is_absolute() || m.dir.empty()) return r.path;
  return (fs::path(m.dir) / p).string();
}

namespace {

constexpr const char* kHeader = "path,patient_id,eye,label,quality,split";

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  for (;;) {
    const size_t end = line.find(',', start);
    if (end == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, end - start));
    start = end + 1;
  }
}

int parse_label(const std::string& s, size_t lineno) {
  if (s.empty() || s.find_first_not_of("-0123456789") != std::string::npos) {
    raise(ErrorKind::Format, "manifest line " + std::to_string(lineno) + ": bad label '" + s + "'");
  }
  return std::stoi(s);
}

uint64_t fnv1a(const void* data, size_t n, uint64_t h) {
  const auto* p = static_cast<const uint8_t*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Manifest load_manifest(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) raise(ErrorKind::Io, "cannot open manifest '" + path + "'");
  Manifest m;
  m.dir = fs::path(path).parent_path().string();

  std::string line;
  size_t lineno = 0;
  std::unordered_set<std::string> seen_paths;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      if (line != kHeader) {
        raise(ErrorKind::Format, "manifest '" + path + "': bad header '" + line + "'");
      }
      continue;
    }
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != 6) {
      raise(ErrorKind::Format, "manifest line " + std::to_string(lineno) + ": expected 6 fields, got " +
                                   std::to_string(fields.size()));
    }
    ImageRecord r;
    r.path = fields[0];
    r.patient_id = fields[1];
    r.eye = eye_from(fields[2]);
    r.label = parse_label(fields[3], lineno);
    r.quality = quality_from(fields[4]);
    r.split = split_from(fields[5]);
    if (r.path.empty()) {
      raise(ErrorKind::Format, "manifest line " + std::to_string(lineno) + ": empty path");
    }
    if (!seen_paths.insert(r.path).second) {
      raise(ErrorKind::Format, "manifest line " + std::to_string(lineno) + ": duplicate path '" +
                                   r.path + "'");
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

void save_manifest(const Manifest& m, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) raise(ErrorKind::Io, "cannot open manifest '" + path + "' for writing");
  f << kHeader << "\n";
  for (const auto& r : m.records) {
    f << r.path << "," << r.patient_id << "," << eye_name(r.eye) << "," << r.label << ","
      << quality_name(r.quality) << "," << split_name(r.split) << "\n";
  }
  if (!f.good()) raise(ErrorKind::Io, "write failed on manifest '" + path + "'");
}

CleanResult clean_manifest(const Manifest& m) {
  CleanResult res;
  res.manifest.dir = m.dir;
  std::unordered_set<uint64_t> hashes;
  for (const auto& r : m.records) {
    if (r.label != 0 && r.label != 1) {
      res.rejected.push_back({r.path, "label"});
      continue;
    }
    RawImage img;
    try {
      img = load_ppm(record_abs_path(m, r));
    } catch (const Error&) {
      res.rejected.push_back({r.path, "corrupt"});
      continue;
    }
    const int64_t want_h = r.quality == Quality::High ? kHighQualityH : kLowQualityH;
    const int64_t want_w = r.quality == Quality::High ? kHighQualityW : kLowQualityW;
    if (img.height != want_h || img.width != want_w) {
      res.rejected.push_back({r.path, "dimensions"});
      continue;
    }
    uint64_t h = 0xcbf29ce484222325ULL;
    h = fnv1a(&img.height, sizeof(img.height), h);
    h = fnv1a(&img.width, sizeof(img.width), h);
    h = fnv1a(img.pixels.data(), img.pixels.size(), h);
    if (!hashes.insert(h).second) {
      res.rejected.push_back({r.path, "duplicate"});
      continue;
    }
    res.manifest.records.push_back(r);
  }
  return res;
}

Manifest augment_dataset(const Manifest& m, const std::vector<AugOp>& ops,
                         const std::string& out_dir) {
  if (ops.empty()) raise(ErrorKind::Parameter, "augment needs at least one op");
  if (m.records.empty()) raise(ErrorKind::Data, "cannot augment an empty manifest");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) raise(ErrorKind::Io, "cannot create '" + out_dir + "': " + ec.message());

  Manifest out;
  out.dir = out_dir;
  out.records.reserve(m.records.size() * (1 + ops.size()));
  std::unordered_set<std::string> used;
  for (const auto& r : m.records) {
    ImageRecord original = r;
    original.path = record_abs_path(m, r);  // keep resolving outside out_dir
    out.records.push_back(original);

    const Tensor t = normalize(load_ppm(original.path));
    const std::string stem = fs::path(r.path).stem().string();
    for (AugOp op : ops) {
      std::string name = stem + "_" + aug_op_name(op) + ".ppm";
      for (int n = 2; !used.insert(name).second; ++n) {
        name = stem + "_" + aug_op_name(op) + "_" + std::to_string(n) + ".ppm";
      }
      save_ppm(to_raw(augment(t, op)), (fs::path(out_dir) / name).string());
      ImageRecord variant = r;
      variant.path = name;
      out.records.push_back(variant);
    }
  }
  save_manifest(out, (fs::path(out_dir) / "manifest.csv").string());
  return out;
}

Manifest split(const Manifest& m, double test_fraction, uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    raise(ErrorKind::Parameter, "test fraction must lie in (0,1), got " +
                                    std::to_string(test_fraction));
  }
  // groups in first-appearance order, then shuffled by seed
  std::vector<std::string> group_keys;
  std::unordered_map<std::string, std::vector<size_t>> groups;
  for (size_t i = 0; i < m.records.size(); ++i) {
    const auto& r = m.records[i];
    const std::string key = r.patient_id + "\x1f" + eye_name(r.eye);
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) group_keys.push_back(key);
    it->second.push_back(i);
  }
  if (group_keys.size() < 2) {
    raise(ErrorKind::Split, "need at least two (patient, eye) groups to split, have " +
                                std::to_string(group_keys.size()));
  }

  Rng rng(seed);
  rng.shuffle(group_keys);

  const double target = test_fraction * static_cast<double>(m.records.size());
  Manifest out = m;
  for (auto& r : out.records) r.split = SplitTag::Train;
  int64_t test_count = 0;
  size_t gi = 0;
  while (gi < group_keys.size() && static_cast<double>(test_count) < target) {
    for (size_t idx : groups.at(group_keys[gi])) {
      out.records[idx].split = SplitTag::Test;
      ++test_count;
    }
    ++gi;
  }
  if (gi == group_keys.size()) {
    raise(ErrorKind::Split, "test fraction " + std::to_string(test_fraction) +
                                " leaves no groups for training");
  }
  return out;
}

Manifest filter_split(const Manifest& m, SplitTag tag) {
  Manifest out;
  out.dir = m.dir;
  for (const auto& r : m.records) {
    if (r.split == tag) out.records.push_back(r);
  }
  return out;
}

WeightedSampler::WeightedSampler(const Manifest& m, double weight_low, double weight_high,
                                 uint64_t seed)
    : rng_(seed) {
  if (!(weight_low > 0.0) || !(weight_high > 0.0)) {
    raise(ErrorKind::Parameter, "sampler weights must be > 0");
  }
  if (m.records.empty()) raise(ErrorKind::Parameter, "cannot sample from an empty manifest");
  cum_.reserve(m.records.size());
  for (const auto& r : m.records) {
    total_ += r.quality == Quality::Low ? weight_low : weight_high;
    cum_.push_back(total_);
  }
}

int64_t WeightedSampler::next() {
  const double u = rng_.uniform01() * total_;
  const auto it = std::upper_bound(cum_.begin(), cum_.end(), u);
  return std::min<int64_t>(static_cast<int64_t>(it - cum_.begin()),
                           static_cast<int64_t>(cum_.size()) - 1);
}

}  // namespace ropnet
