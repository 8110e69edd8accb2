#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ropnet/data.hpp"
#include "ropnet/model.hpp"

namespace ropnet {

struct MetricsReport {
  int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0.0;
  double precision = 0.0;  // 0 when undefined, see flag
  double recall = 0.0;     // 0 when undefined, see flag
  double f1 = 0.0;         // 2PR/(P+R), 0 when P+R == 0
  bool precision_undefined = false;  // no positive predictions
  bool recall_undefined = false;     // no positive ground truth
};

MetricsReport metrics_from_counts(int64_t tp, int64_t fp, int64_t tn, int64_t fn);

// A manifest's images decoded, normalized and resized once, stacked NHWC.
// Everything downstream (training, evaluation, voting) works from this.
struct ImageSet {
  Tensor images{std::vector<int64_t>{1}};  // [N, size, size, 3]
  std::vector<float> labels;
  int64_t count() const { return static_cast<int64_t>(labels.size()); }
};

ImageSet load_images(const Manifest& m, int64_t input_size);

struct TrainConfig {
  int64_t epochs = 100;
  int64_t batch_size = 32;
  double lr = 1e-3;
  uint64_t seed = 0;
  bool fine_tune = false;  // train on every row and skip validation
  double weight_low = 2.0;   // sampling weight of low-quality images
  double weight_high = 1.0;  // sampling weight of high-quality images
  int64_t input_size = 0;    // 0 = inherit from the model spec; else must match
  double width_multiplier = 1.0;  // used by callers that build the model
};

struct EpochStats {
  int64_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  bool has_val = false;
};

struct TrainResult {
  Parameters params;
  std::vector<EpochStats> history;
};

// Mini-batch training: per epoch, ceil(N/batch) weighted-sampler batches of
// train-mode forward / BCE / backward / Adam. Epoch-end stats run in infer
// mode on a fixed seeded subsample of at most 512 train images, and on the
// test split as validation (skipped when fine-tuning, which trains on every
// row of the manifest). Deterministic per seed.
TrainResult train(const ModelSpec& spec, Parameters params, const Manifest& m,
                  const TrainConfig& cfg);

// infer-mode probabilities for every image of the set, in order
std::vector<double> predict_probs(const ModelSpec& spec, const Parameters& params,
                                  const ImageSet& set, int64_t batch_size = 64);

// threshold 0.5 over the rows of `m` carrying `tag`
MetricsReport evaluate(const ModelSpec& spec, const Parameters& params, const Manifest& m,
                       SplitTag tag, int64_t batch_size = 64);

// CSV `epoch,train_loss,train_acc,val_loss,val_acc`, 6 decimals, LF endings;
// val fields are left blank for fine-tune histories
void export_history(const std::vector<EpochStats>& stats, const std::string& path);

}  // namespace ropnet
