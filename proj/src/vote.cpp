#include "ropnet/vote.hpp"

#include <fstream>
#include <unordered_map>

namespace ropnet {

GroupPrediction vote(const std::vector<double>& probs, double threshold, bool tie_positive) {
  if (probs.empty()) raise(ErrorKind::Parameter, "cannot vote over an empty group");
  GroupPrediction g;
  g.probs = probs;
  int positive = 0;
  for (const double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) {
      raise(ErrorKind::Parameter, "probability " + std::to_string(p) + " outside [0,1]");
    }
    const int v = p >= threshold ? 1 : 0;
    g.votes.push_back(v);
    positive += v;
  }
  const int negative = static_cast<int>(probs.size()) - positive;
  if (positive > negative) {
    g.decision = 1;
  } else if (positive < negative) {
    g.decision = 0;
  } else {
    g.decision = tie_positive ? 1 : 0;
    g.tie_broken = true;
  }
  return g;
}

GroupedEval evaluate_grouped(const ModelSpec& spec, const Parameters& params, const Manifest& m,
                             SplitTag tag, bool mean_prob, int64_t batch_size) {
  const Manifest rows = filter_split(m, tag);
  if (rows.records.empty()) {
    raise(ErrorKind::Data, std::string("no rows tagged '") + split_name(tag) + "' to evaluate");
  }

  // groups in first-appearance order, labels checked for consistency
  std::vector<std::string> keys;
  std::unordered_map<std::string, std::vector<size_t>> members;
  for (size_t i = 0; i < rows.records.size(); ++i) {
    const auto& r = rows.records[i];
    const std::string key = r.patient_id + "/" + eye_name(r.eye);
    auto [it, inserted] = members.try_emplace(key);
    if (inserted) {
      keys.push_back(key);
    } else if (rows.records[it->second.front()].label != r.label) {
      raise(ErrorKind::Data, "group " + key + " mixes labels");
    }
    it->second.push_back(i);
  }

  const ImageSet set = load_images(rows, spec.input_h);
  const std::vector<double> probs = predict_probs(spec, params, set, batch_size);

  GroupedEval out;
  int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (const auto& key : keys) {
    const auto& idx = members.at(key);
    std::vector<double> group_probs;
    group_probs.reserve(idx.size());
    for (const size_t i : idx) group_probs.push_back(probs[i]);

    GroupPrediction g = vote(group_probs);
    if (mean_prob) {
      double mean = 0.0;
      for (const double p : group_probs) mean += p;
      mean /= static_cast<double>(group_probs.size());
      g.decision = mean >= 0.5 ? 1 : 0;
      g.tie_broken = false;
    }
    const auto& first = rows.records[idx.front()];
    g.patient_id = first.patient_id;
    g.eye = first.eye;
    g.label = first.label;
    const bool pred = g.decision == 1, truth = g.label == 1;
    tp += pred && truth;
    fp += pred && !truth;
    tn += !pred && !truth;
    fn += !pred && truth;
    out.groups.push_back(std::move(g));
  }
  out.metrics = metrics_from_counts(tp, fp, tn, fn);
  return out;
}

void export_group_csv(const std::vector<GroupPrediction>& groups, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) raise(ErrorKind::Io, "cannot open group file '" + path + "' for writing");
  f << "patient_id,eye,n_images,n_positive_votes,decision,label\n";
  for (const auto& g : groups) {
    int positive = 0;
    for (const int v : g.votes) positive += v;
    f << g.patient_id << "," << eye_name(g.eye) << "," << g.votes.size() << "," << positive
      << "," << g.decision << "," << g.label << "\n";
  }
  if (!f.good()) raise(ErrorKind::Io, "write failed on group file '" + path + "'");
}

}  // namespace ropnet
