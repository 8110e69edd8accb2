#include "ropnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "ropnet/autodiff.hpp"
#include "ropnet/image.hpp"
#include "ropnet/loss.hpp"
#include "ropnet/optim.hpp"
#include "ropnet/rng.hpp"

namespace ropnet {
namespace {

// stream tags so the sampler, the eval subsample and future consumers of
// cfg.seed never share a sequence
constexpr uint64_t kSamplerStream = 0xBA7C;
constexpr uint64_t kEvalStream = 0x5AB5;
constexpr int64_t kEvalSubsample = 512;
constexpr int64_t kEvalBatch = 64;

ImageSet gather(const ImageSet& src, const std::vector<int64_t>& idx, int64_t size) {
  ImageSet out;
  out.images = Tensor({static_cast<int64_t>(idx.size()), size, size, 3});
  out.labels.resize(idx.size());
  const int64_t row = size * size * 3;
  for (size_t k = 0; k < idx.size(); ++k) {
    std::copy_n(src.images.data() + idx[k] * row, row,
                out.images.data() + static_cast<int64_t>(k) * row);
    out.labels[k] = src.labels[static_cast<size_t>(idx[k])];
  }
  return out;
}

Tensor labels_tensor(const ImageSet& set, int64_t begin, int64_t count) {
  Tensor y({count, 1});
  for (int64_t i = 0; i < count; ++i) y[i] = set.labels[static_cast<size_t>(begin + i)];
  return y;
}

Tensor slice_rows(const ImageSet& set, int64_t begin, int64_t count, int64_t size) {
  Tensor x({count, size, size, 3});
  const int64_t row = size * size * 3;
  std::copy_n(set.images.data() + begin * row, count * row, x.data());
  return x;
}

struct EvalStats {
  double loss = 0.0;
  double acc = 0.0;
};

EvalStats eval_stats(const ModelSpec& spec, const Parameters& params, const ImageSet& set) {
  const int64_t n = set.count();
  double loss_sum = 0.0;
  int64_t correct = 0;
  for (int64_t begin = 0; begin < n; begin += kEvalBatch) {
    const int64_t count = std::min(kEvalBatch, n - begin);
    const Tensor x = slice_rows(set, begin, count, spec.input_h);
    const Tensor y = labels_tensor(set, begin, count);
    const Tensor out = forward(spec, params, x);
    loss_sum += bce_loss(y, out) * static_cast<double>(count);
    for (int64_t i = 0; i < count; ++i) {
      const int pred = out[i] >= 0.5f ? 1 : 0;
      correct += pred == static_cast<int>(y[i]);
    }
  }
  return {loss_sum / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n)};
}

}  // namespace

MetricsReport metrics_from_counts(int64_t tp, int64_t fp, int64_t tn, int64_t fn) {
  const int64_t n = tp + fp + tn + fn;
  if (n <= 0) raise(ErrorKind::Parameter, "metrics need at least one sample");
  MetricsReport r;
  r.tp = tp;
  r.fp = fp;
  r.tn = tn;
  r.fn = fn;
  r.accuracy = static_cast<double>(tp + tn) / static_cast<double>(n);
  if (tp + fp > 0) {
    r.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  } else {
    r.precision_undefined = true;
  }
  if (tp + fn > 0) {
    r.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  } else {
    r.recall_undefined = true;
  }
  if (r.precision + r.recall > 0.0) {
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  }
  return r;
}

ImageSet load_images(const Manifest& m, int64_t input_size) {
  if (input_size < 1) raise(ErrorKind::Parameter, "input size must be >= 1");
  if (m.records.empty()) raise(ErrorKind::Data, "manifest has no records to load");
  ImageSet set;
  const int64_t n = static_cast<int64_t>(m.records.size());
  set.images = Tensor({n, input_size, input_size, 3});
  set.labels.resize(static_cast<size_t>(n));
  const int64_t row = input_size * input_size * 3;
  for (int64_t i = 0; i < n; ++i) {
    const auto& rec = m.records[static_cast<size_t>(i)];
    if (rec.label != 0 && rec.label != 1) {
      raise(ErrorKind::Data, "record '" + rec.path + "' has non-binary label " +
                                 std::to_string(rec.label));
    }
    Tensor img = normalize(load_ppm(record_abs_path(m, rec)));
    if (img.extent(0) != input_size || img.extent(1) != input_size) {
      img = resize_bilinear(img, input_size, input_size);
    }
    std::copy_n(img.data(), row, set.images.data() + i * row);
    set.labels[static_cast<size_t>(i)] = static_cast<float>(rec.label);
  }
  return set;
}

TrainResult train(const ModelSpec& spec, Parameters params, const Manifest& m,
                  const TrainConfig& cfg) {
  if (cfg.epochs < 1) raise(ErrorKind::Parameter, "epochs must be >= 1");
  if (cfg.batch_size < 1) raise(ErrorKind::Parameter, "batch size must be >= 1");
  if (cfg.input_size > 0 &&
      (spec.input_h != cfg.input_size || spec.input_w != cfg.input_size)) {
    raise(ErrorKind::Shape, "model expects " + std::to_string(spec.input_h) + "x" +
                                std::to_string(spec.input_w) + " input, config says " +
                                std::to_string(cfg.input_size));
  }

  const Manifest train_rows = cfg.fine_tune ? m : filter_split(m, SplitTag::Train);
  if (train_rows.records.empty()) raise(ErrorKind::Data, "no training rows in manifest");
  const ImageSet train_set = load_images(train_rows, spec.input_h);

  ImageSet val_set;
  if (!cfg.fine_tune) {
    const Manifest val_rows = filter_split(m, SplitTag::Test);
    if (val_rows.records.empty()) {
      raise(ErrorKind::Data,
            "no test rows to validate on; fine_tune trains without validation");
    }
    val_set = load_images(val_rows, spec.input_h);
  }

  // fixed subsample for epoch-end train stats, chosen once
  const int64_t n = train_set.count();
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), int64_t{0});
  Rng(Rng::mix(cfg.seed, kEvalStream)).shuffle(order);
  order.resize(static_cast<size_t>(std::min(n, kEvalSubsample)));
  std::sort(order.begin(), order.end());
  const ImageSet train_eval = gather(train_set, order, spec.input_h);

  WeightedSampler sampler(train_rows, cfg.weight_low, cfg.weight_high,
                          Rng::mix(cfg.seed, kSamplerStream));
  AdamConfig ocfg;
  ocfg.lr = cfg.lr;
  AdamT<float> opt(ocfg);

  const int64_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t row = spec.input_h * spec.input_w * 3;
  Tensor batch_x({cfg.batch_size, spec.input_h, spec.input_w, 3});
  Tensor batch_y({cfg.batch_size, 1});

  std::vector<EpochStats> history;
  history.reserve(static_cast<size_t>(cfg.epochs));
  for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (int64_t b = 0; b < batches; ++b) {
      for (int64_t k = 0; k < cfg.batch_size; ++k) {
        const int64_t idx = sampler.next();
        std::copy_n(train_set.images.data() + idx * row, row, batch_x.data() + k * row);
        batch_y[k] = train_set.labels[static_cast<size_t>(idx)];
      }
      Tape tape;
      const Tensor out = forward_record(spec, params, batch_x, tape);
      const double loss = bce_loss(batch_y, out);
      if (!std::isfinite(loss)) {
        raise(ErrorKind::Numeric, "non-finite loss at epoch " + std::to_string(epoch) +
                                      ", batch " + std::to_string(b + 1));
      }
      const GradientSet grads = backward(tape, bce_grad(batch_y, out));
      opt.step(params, grads);
    }

    EpochStats st;
    st.epoch = epoch;
    const EvalStats tr = eval_stats(spec, params, train_eval);
    st.train_loss = tr.loss;
    st.train_acc = tr.acc;
    if (!cfg.fine_tune) {
      const EvalStats va = eval_stats(spec, params, val_set);
      st.val_loss = va.loss;
      st.val_acc = va.acc;
      st.has_val = true;
    }
    history.push_back(st);
  }
  return {std::move(params), std::move(history)};
}

std::vector<double> predict_probs(const ModelSpec& spec, const Parameters& params,
                                  const ImageSet& set, int64_t batch_size) {
  if (batch_size < 1) raise(ErrorKind::Parameter, "batch size must be >= 1");
  const int64_t n = set.count();
  std::vector<double> probs(static_cast<size_t>(n));
  for (int64_t begin = 0; begin < n; begin += batch_size) {
    const int64_t count = std::min(batch_size, n - begin);
    const Tensor out = forward(spec, params, slice_rows(set, begin, count, spec.input_h));
    for (int64_t i = 0; i < count; ++i) probs[static_cast<size_t>(begin + i)] = out[i];
  }
  return probs;
}

MetricsReport evaluate(const ModelSpec& spec, const Parameters& params, const Manifest& m,
                       SplitTag tag, int64_t batch_size) {
  const Manifest rows = filter_split(m, tag);
  if (rows.records.empty()) {
    raise(ErrorKind::Data, std::string("no rows tagged '") + split_name(tag) + "' to evaluate");
  }
  const ImageSet set = load_images(rows, spec.input_h);
  const std::vector<double> probs = predict_probs(spec, params, set, batch_size);
  int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (int64_t i = 0; i < set.count(); ++i) {
    const bool pred = probs[static_cast<size_t>(i)] >= 0.5;
    const bool truth = set.labels[static_cast<size_t>(i)] != 0.0f;
    tp += pred && truth;
    fp += pred && !truth;
    tn += !pred && !truth;
    fn += !pred && truth;
  }
  return metrics_from_counts(tp, fp, tn, fn);
}

void export_history(const std::vector<EpochStats>& stats, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) raise(ErrorKind::Io, "cannot open history file '" + path + "' for writing");
  f << "epoch,train_loss,train_acc,val_loss,val_acc\n";
  char line[160];
  for (const auto& s : stats) {
    if (s.has_val) {
      std::snprintf(line, sizeof(line), "%lld,%.6f,%.6f,%.6f,%.6f\n",
                    static_cast<long long>(s.epoch), s.train_loss, s.train_acc, s.val_loss,
                    s.val_acc);
    } else {
      std::snprintf(line, sizeof(line), "%lld,%.6f,%.6f,,\n", static_cast<long long>(s.epoch),
                    s.train_loss, s.train_acc);
    }
    f << line;
  }
  if (!f.good()) raise(ErrorKind::Io, "write failed on history file '" + path + "'");
}

}  // namespace ropnet
