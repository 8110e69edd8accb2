#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ropnet/data.hpp"
#include "ropnet/train.hpp"

namespace ropnet {

struct GroupPrediction {
  std::string patient_id;
  Eye eye = Eye::L;
  std::vector<double> probs;
  std::vector<int> votes;  // thresholded, one per image
  int decision = 0;
  bool tie_broken = false;
  int label = 0;  // ground truth, filled by evaluate_grouped
};

// majority of thresholded per-image votes. An exact tie (even group size)
// resolves positive by default: in screening a false referral is the cheaper
// mistake.
GroupPrediction vote(const std::vector<double>& probs, double threshold = 0.5,
                     bool tie_positive = true);

struct GroupedEval {
  MetricsReport metrics;  // over groups, not images
  std::vector<GroupPrediction> groups;
};

// One decision per (patient, eye) group among the rows tagged `tag`, groups
// in first-appearance order. mean_prob switches aggregation from majority
// voting to thresholding the mean probability.
GroupedEval evaluate_grouped(const ModelSpec& spec, const Parameters& params, const Manifest& m,
                             SplitTag tag, bool mean_prob = false, int64_t batch_size = 64);

// CSV `patient_id,eye,n_images,n_positive_votes,decision,label`, LF endings
void export_group_csv(const std::vector<GroupPrediction>& groups, const std::string& path);

}  // namespace ropnet
