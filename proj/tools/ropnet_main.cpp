// ropnet: one binary for the whole workflow — synthesize data, clean,
// augment, split, train, evaluate (per image and per eye), predict, plan
// benchmarks, inspect models. All diagnostics go to stderr; results go to
// files or stdout. Exit codes: 0 ok, 1 usage, 2 data/format, 3 numeric.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "ropnet/data.hpp"
#include "ropnet/error.hpp"
#include "ropnet/image.hpp"
#include "ropnet/kernels.hpp"
#include "ropnet/model.hpp"
#include "ropnet/runtime.hpp"
#include "ropnet/synth.hpp"
#include "ropnet/train.hpp"
#include "ropnet/vote.hpp"

using namespace ropnet;

namespace {

int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::Parameter:
    case ErrorKind::Validation:
      return 1;
    case ErrorKind::Numeric:
      return 3;
    default:
      return 2;  // shape/format/data/io/split/capability
  }
}

struct GlobalOpts {
  uint64_t seed = 0;
  int threads = 0;  // 0 = keep ROPNET_THREADS / default
  bool deterministic = false;
  bool dry_run = false;
  std::string backend;  // empty = keep ROPNET_BACKEND / autodetect
};

void apply_globals(const GlobalOpts& g) {
  if (!g.backend.empty()) {
    kern::Backend b = kern::Backend::Scalar;
    if (g.backend == "avx2") b = kern::Backend::Avx2;
    if (g.backend == "neon") b = kern::Backend::Neon;
    kern::set_backend(b);
  }
  // every pipeline is seed-deterministic at any worker count; --deterministic
  // additionally pins to one worker so wall-clock ordering cannot differ either
  if (g.deterministic) {
    kern::set_threads(1);
  } else if (g.threads > 0) {
    kern::set_threads(g.threads);
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

void print_metrics(const MetricsReport& r) {
  std::cout << "samples " << (r.tp + r.fp + r.tn + r.fn) << "\n"
            << "tp " << r.tp << "\nfp " << r.fp << "\ntn " << r.tn << "\nfn " << r.fn << "\n"
            << "accuracy " << fmt(r.accuracy) << "\n"
            << "precision " << fmt(r.precision)
            << (r.precision_undefined ? " (undefined: no positive predictions)" : "") << "\n"
            << "recall " << fmt(r.recall)
            << (r.recall_undefined ? " (undefined: no positive labels)" : "") << "\n"
            << "f1 " << fmt(r.f1) << "\n";
}

// derived manifests may land anywhere, so pin their rows to the source images
Manifest absolutized(Manifest m) {
  for (ImageRecord& r : m.records) {
    r.path = std::filesystem::absolute(record_abs_path(m, r)).lexically_normal().string();
  }
  return m;
}

BuiltModel fresh_or_loaded(const std::string& model_path, int64_t input_size, double width,
                           uint64_t seed) {
  if (!model_path.empty()) return load_model(model_path);
  return build_custom_rop_net(input_size, width, seed);
}

// ---- subcommand bodies ----------------------------------------------------

struct SynthArgs {
  std::string out;
  int64_t patients = 10;
  int64_t images_per_eye = 3;
  double positive_rate = 0.5;
  double quality_mix = 0.5;
};

int cmd_synth(const GlobalOpts& g, const SynthArgs& a) {
  SynthConfig cfg;
  cfg.n_patients = a.patients;
  cfg.images_per_eye = a.images_per_eye;
  cfg.positive_rate = a.positive_rate;
  cfg.quality_mix = a.quality_mix;
  cfg.seed = g.seed;
  if (g.dry_run) {
    std::cerr << "dry-run: would synthesize " << cfg.n_patients * 2 * cfg.images_per_eye
              << " images into " << a.out << "\n";
    return 0;
  }
  const Manifest m = synth_generate(cfg, a.out);
  std::cout << "wrote " << m.records.size() << " images, manifest " << a.out << "/manifest.csv"
            << "\n";
  return 0;
}

struct CleanArgs {
  std::string manifest;
  std::string out;
};

int cmd_clean(const GlobalOpts& g, const CleanArgs& a) {
  const Manifest m = absolutized(load_manifest(a.manifest));
  const CleanResult res = clean_manifest(m);
  for (const Rejection& r : res.rejected) std::cout << "rejected " << r.path << ": " << r.reason << "\n";
  std::cout << "kept " << res.manifest.records.size() << " of " << m.records.size() << "\n";
  if (g.dry_run) {
    std::cerr << "dry-run: not writing " << a.out << "\n";
    return 0;
  }
  save_manifest(res.manifest, a.out);
  std::cout << "manifest " << a.out << "\n";
  return 0;
}

struct AugmentArgs {
  std::string manifest;
  std::string out;
  std::string ops;
};

int cmd_augment(const GlobalOpts& g, const AugmentArgs& a) {
  std::vector<AugOp> ops;
  try {
    ops = parse_aug_ops(a.ops);
  } catch (const Error& e) {
    raise(ErrorKind::Parameter, e.what());  // bad --ops is a usage error
  }
  const Manifest m = load_manifest(a.manifest);
  if (g.dry_run) {
    std::cerr << "dry-run: would write " << m.records.size() * ops.size() << " images into "
              << a.out << "\n";
    return 0;
  }
  const Manifest out = augment_dataset(m, ops, a.out);
  std::cout << "wrote " << out.records.size() - m.records.size() << " variants, manifest "
            << a.out << "/manifest.csv\n";
  return 0;
}

struct SplitArgs {
  std::string manifest;
  std::string out;
  double test_fraction = 0.2;
};

int cmd_split(const GlobalOpts& g, const SplitArgs& a) {
  const Manifest m = absolutized(load_manifest(a.manifest));
  const Manifest s = split(m, a.test_fraction, g.seed);
  int64_t test = 0;
  for (const auto& r : s.records) test += r.split == SplitTag::Test ? 1 : 0;
  std::cout << "train " << (static_cast<int64_t>(s.records.size()) - test) << ", test " << test
            << "\n";
  if (g.dry_run) {
    std::cerr << "dry-run: not writing " << a.out << "\n";
    return 0;
  }
  save_manifest(s, a.out);
  std::cout << "manifest " << a.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string manifest;
  std::string model;  // optional starting point; empty = fresh custom net
  double width = 1.0;
  int64_t input_size = 0;  // 0 = the model's own size (64 for fresh builds)
  int64_t epochs = 100;
  int64_t batch = 32;
  double lr = 1e-3;
  bool fine_tune = false;
  double weight_low = 2.0;
  double weight_high = 1.0;
  std::string model_out = "model.bin";
  std::string history_out = "history.csv";
};

int cmd_train(const GlobalOpts& g, const TrainArgs& a) {
  const Manifest m = load_manifest(a.manifest);
  const int64_t fresh_size = a.input_size > 0 ? a.input_size : 64;
  const BuiltModel bm = fresh_or_loaded(a.model, fresh_size, a.width, g.seed);

  TrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch;
  cfg.lr = a.lr;
  cfg.seed = g.seed;
  cfg.fine_tune = a.fine_tune;
  cfg.weight_low = a.weight_low;
  cfg.weight_high = a.weight_high;
  cfg.input_size = a.input_size;
  cfg.width_multiplier = a.width;

  if (g.dry_run) {
    const Manifest rows = cfg.fine_tune ? m : filter_split(m, SplitTag::Train);
    if (rows.records.empty()) raise(ErrorKind::Data, "no training rows in manifest");
    if (!cfg.fine_tune && filter_split(m, SplitTag::Test).records.empty()) {
      raise(ErrorKind::Data, "no test rows to validate on; fine_tune trains without validation");
    }
    std::cerr << "dry-run: would train " << bm.spec.name << " for " << cfg.epochs << " epochs on "
              << rows.records.size() << " rows\n";
    return 0;
  }

  const TrainResult res = train(bm.spec, bm.params, m, cfg);
  const EpochStats& last = res.history.back();
  std::cout << "epoch " << last.epoch << ": train_loss " << fmt(last.train_loss) << ", train_acc "
            << fmt(last.train_acc);
  if (last.has_val) {
    std::cout << ", val_loss " << fmt(last.val_loss) << ", val_acc " << fmt(last.val_acc);
  }
  std::cout << "\n";
  save_model(bm.spec, res.params, a.model_out);
  export_history(res.history, a.history_out);
  std::cout << "model " << a.model_out << "\nhistory " << a.history_out << "\n";
  return 0;
}

struct EvalArgs {
  std::string manifest;
  std::string model;
  std::string split = "test";
};

int cmd_eval(const GlobalOpts& g, const EvalArgs& a) {
  const Manifest m = load_manifest(a.manifest);
  const BuiltModel bm = load_model(a.model);
  if (g.dry_run) {
    std::cerr << "dry-run: would evaluate " << bm.spec.name << " on the " << a.split
              << " split\n";
    return 0;
  }
  print_metrics(evaluate(bm.spec, bm.params, m, split_from(a.split)));
  return 0;
}

struct VoteArgs {
  std::string manifest;
  std::string model;
  std::string split = "test";
  bool mean_prob = false;
  std::string group_csv;
};

int cmd_vote_eval(const GlobalOpts& g, const VoteArgs& a) {
  const Manifest m = load_manifest(a.manifest);
  const BuiltModel bm = load_model(a.model);
  if (g.dry_run) {
    std::cerr << "dry-run: would aggregate per (patient, eye) on the " << a.split << " split\n";
    return 0;
  }
  const GroupedEval ge =
      evaluate_grouped(bm.spec, bm.params, m, split_from(a.split), a.mean_prob);
  int64_t ties = 0;
  for (const auto& grp : ge.groups) ties += grp.tie_broken ? 1 : 0;
  std::cout << "groups " << ge.groups.size() << " (ties broken " << ties << ")\n";
  print_metrics(ge.metrics);
  if (!a.group_csv.empty()) {
    export_group_csv(ge.groups, a.group_csv);
    std::cout << "groups_csv " << a.group_csv << "\n";
  }
  return 0;
}

struct PredictArgs {
  std::string model;
  std::string image;
};

int cmd_predict(const GlobalOpts& g, const PredictArgs& a) {
  const BuiltModel bm = load_model(a.model);
  const RawImage raw = load_ppm(a.image);
  if (g.dry_run) {
    std::cerr << "dry-run: model and image load fine\n";
    return 0;
  }
  Tensor t = normalize(raw);
  if (t.extent(0) != bm.spec.input_h || t.extent(1) != bm.spec.input_w) {
    t = resize_bilinear(t, bm.spec.input_h, bm.spec.input_w);
  }
  const Tensor x = t.reshaped({1, bm.spec.input_h, bm.spec.input_w, bm.spec.input_c});
  const Tensor y = forward(bm.spec, bm.params, x);
  const double p = y[0];
  std::cout << fmt(p) << " " << (p >= 0.5 ? "positive" : "negative") << "\n";
  return 0;
}

struct BenchArgs {
  std::vector<std::string> models;
  std::vector<std::string> modes;  // empty = all three
  int64_t n_images = 46;
  int64_t runtimes = 10;
  std::string out;
};

int cmd_bench(const GlobalOpts& g, const BenchArgs& a) {
  std::vector<std::string> modes = a.modes;
  if (modes.empty()) modes = {"eager", "planned_percall", "planned_preinit"};
  std::vector<BenchMode> parsed;
  for (const std::string& m : modes) parsed.push_back(bench_mode_from(m));
  if (g.dry_run) {
    for (const std::string& m : a.models) load_model(m);
    std::cerr << "dry-run: would time " << a.models.size() << " model(s) x " << parsed.size()
              << " mode(s), " << a.n_images << " images, " << a.runtimes << " repetitions\n";
    return 0;
  }
  std::vector<FpsReport> reports;
  for (const std::string& path : a.models) {
    for (BenchMode mode : parsed) {
      reports.push_back(fps_bench(path, mode, a.n_images, a.runtimes, g.seed));
    }
  }
  normalize_reports(reports);
  for (const FpsReport& r : reports) {
    std::cout << r.model << " " << r.mode << ": mean_fps " << fmt(r.mean_fps) << ", std_fps "
              << fmt(r.std_fps) << ", normalized " << fmt(r.normalized_fps) << "\n";
  }
  if (!a.out.empty()) {
    export_bench_csv(reports, a.out);
    std::cout << "csv " << a.out << "\n";
  }
  return 0;
}

struct InspectArgs {
  std::string model;  // empty = fresh build
  std::string family = "custom";
  double width = 1.0;
  int64_t input_size = 64;
};

int cmd_inspect(const GlobalOpts& g, const InspectArgs& a) {
  BuiltModel bm;
  if (!a.model.empty()) {
    bm = load_model(a.model);
  } else if (a.family == "mobilenet") {
    bm = build_mobilenet_like(a.input_size, g.seed);
  } else {
    bm = build_custom_rop_net(a.input_size, a.width, g.seed);
  }
  const auto shapes = infer_shapes(bm.spec, 1);
  std::cout << "model " << bm.spec.name << "\n"
            << "input " << bm.spec.input_h << "x" << bm.spec.input_w << "x" << bm.spec.input_c
            << "\nwidth_multiplier " << bm.spec.width_multiplier << "\n";
  for (size_t i = 0; i < bm.spec.layers.size(); ++i) {
    const LayerSpec& l = bm.spec.layers[i];
    std::cout << "layer " << i << " " << layer_kind_name(l.kind);
    if (l.kind == LayerKind::Conv || l.kind == LayerKind::DepthwiseConv) {
      std::cout << " " << l.conv.kernel_h << "x" << l.conv.kernel_w << " stride " << l.conv.stride;
    }
    if (l.kind == LayerKind::Dense) std::cout << " units " << l.units;
    std::cout << " -> [";
    for (size_t d = 0; d < shapes[i].size(); ++d) {
      std::cout << (d ? "," : "") << shapes[i][d];
    }
    std::cout << "]\n";
  }
  const ParamCount pc = count_parameters(bm.params);
  std::cout << "trainable_parameters " << pc.trainable << "\n"
            << "total_parameters " << pc.total << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "ropnet: synthetic ROP screening pipeline — data synthesis, preprocessing, CNN "
      "training, per-eye voting and inference benchmarking.\n"
      "Global flags apply to every subcommand. Worker threads default to the "
      "ROPNET_THREADS environment variable (1 if unset); ROPNET_BACKEND picks the "
      "kernel backend."};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--seed", g.seed, "seed for every random choice (default 0)");
  app.add_option("--threads", g.threads, "worker threads (overrides ROPNET_THREADS)")
      ->check(CLI::Range(1, 4096));
  app.add_flag("--deterministic", g.deterministic,
               "pin kernels to one worker; outputs are seed-deterministic regardless");
  app.add_flag("--dry-run", g.dry_run, "validate inputs and flags, write nothing");
  app.add_option("--backend", g.backend, "kernel backend (overrides ROPNET_BACKEND)")
      ->check(CLI::IsMember({"scalar", "avx2", "neon"}));

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic labeled dataset");
  synth->add_option("--out", synth_args.out, "output directory")->required();
  synth->add_option("--patients", synth_args.patients, "number of patients (default 10)")
      ->check(CLI::Range(int64_t(1), int64_t(1000000)));
  synth->add_option("--images-per-eye", synth_args.images_per_eye, "images per eye (default 3)")
      ->check(CLI::Range(int64_t(1), int64_t(1000000)));
  synth->add_option("--positive-rate", synth_args.positive_rate,
                    "probability an eye is positive (default 0.5)")
      ->check(CLI::Range(0.0, 1.0));
  synth->add_option("--quality-mix", synth_args.quality_mix,
                    "probability an image lands in the low-quality tier (default 0.5)")
      ->check(CLI::Range(0.0, 1.0));

  CleanArgs clean_args;
  CLI::App* clean = app.add_subcommand("clean", "drop corrupt, mis-sized and duplicate rows");
  clean->add_option("--manifest", clean_args.manifest, "input manifest csv")->required();
  clean->add_option("--out", clean_args.out, "cleaned manifest path")->required();

  AugmentArgs augment_args;
  CLI::App* augment = app.add_subcommand("augment", "write augmented image variants");
  augment->add_option("--manifest", augment_args.manifest, "input manifest csv")->required();
  augment->add_option("--out", augment_args.out, "output directory")->required();
  augment
      ->add_option("--ops", augment_args.ops,
                   "comma list of rot90,rot180,rot270,flip_h,flip_v,flip_h_rot90,contrast")
      ->required();

  SplitArgs split_args;
  CLI::App* split_cmd = app.add_subcommand("split", "assign patient-grouped train/test splits");
  split_cmd->add_option("--manifest", split_args.manifest, "input manifest csv")->required();
  split_cmd->add_option("--out", split_args.out, "split manifest path")->required();
  split_cmd
      ->add_option("--test-fraction", split_args.test_fraction,
                   "target test share of images (default 0.2)")
      ->check(CLI::Range(0.0, 1.0));

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "train the classifier");
  train_cmd->add_option("--manifest", train_args.manifest, "split manifest csv")->required();
  train_cmd->add_option("--model", train_args.model,
                        "starting model file (default: fresh custom net)");
  train_cmd->add_option("--width", train_args.width, "width multiplier for fresh builds")
      ->check(CLI::Range(1e-6, 16.0));
  train_cmd
      ->add_option("--input-size", train_args.input_size,
                   "square input size; 0 = the model's own (fresh builds use 64)")
      ->check(CLI::Range(int64_t(0), int64_t(4096)));
  train_cmd->add_option("--epochs", train_args.epochs, "training epochs (default 100)")
      ->check(CLI::Range(int64_t(1), int64_t(1000000)));
  train_cmd->add_option("--batch", train_args.batch, "batch size (default 32)")
      ->check(CLI::Range(int64_t(1), int64_t(1000000)));
  train_cmd->add_option("--lr", train_args.lr, "Adam learning rate (default 1e-3)");
  train_cmd->add_flag("--fine-tune", train_args.fine_tune,
                      "train on every row and skip validation");
  train_cmd->add_option("--weight-low", train_args.weight_low,
                        "sampling weight of low-quality images (default 2)");
  train_cmd->add_option("--weight-high", train_args.weight_high,
                        "sampling weight of high-quality images (default 1)");
  train_cmd->add_option("--model-out", train_args.model_out, "trained model path");
  train_cmd->add_option("--history-out", train_args.history_out, "per-epoch csv path");

  EvalArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("eval", "per-image metrics on a split");
  eval_cmd->add_option("--manifest", eval_args.manifest, "manifest csv")->required();
  eval_cmd->add_option("--model", eval_args.model, "model file")->required();
  eval_cmd->add_option("--split", eval_args.split, "split to score (default test)")
      ->check(CLI::IsMember({"train", "test", "unassigned"}));

  VoteArgs vote_args;
  CLI::App* vote_cmd = app.add_subcommand("vote-eval", "per-eye majority-vote metrics");
  vote_cmd->add_option("--manifest", vote_args.manifest, "manifest csv")->required();
  vote_cmd->add_option("--model", vote_args.model, "model file")->required();
  vote_cmd->add_option("--split", vote_args.split, "split to score (default test)")
      ->check(CLI::IsMember({"train", "test", "unassigned"}));
  vote_cmd->add_flag("--mean-prob", vote_args.mean_prob,
                     "threshold the mean probability instead of voting");
  vote_cmd->add_option("--group-csv", vote_args.group_csv, "write per-group decisions here");

  PredictArgs predict_args;
  CLI::App* predict_cmd = app.add_subcommand("predict", "classify one image");
  predict_cmd->add_option("--model", predict_args.model, "model file")->required();
  predict_cmd->add_option("--image", predict_args.image, "ppm image path")->required();

  BenchArgs bench_args;
  CLI::App* bench_cmd = app.add_subcommand("bench", "frames-per-second benchmark");
  bench_cmd->add_option("--model", bench_args.models, "model file (repeat for several)")
      ->required();
  bench_cmd
      ->add_option("--mode", bench_args.modes,
                   "eager, planned_percall or planned_preinit (repeatable; default all)")
      ->check(CLI::IsMember({"eager", "planned_percall", "planned_preinit"}));
  bench_cmd->add_option("--n-images", bench_args.n_images, "images per repetition (default 46)")
      ->check(CLI::Range(int64_t(1), int64_t(1000000)));
  bench_cmd->add_option("--runtimes", bench_args.runtimes, "timed repetitions (default 10)")
      ->check(CLI::Range(int64_t(1), int64_t(1000000)));
  bench_cmd->add_option("--out", bench_args.out, "write the report csv here");

  InspectArgs inspect_args;
  CLI::App* inspect_cmd = app.add_subcommand("inspect", "print a model's layers and sizes");
  // global flags may follow the subcommand name
  for (CLI::App* sub : app.get_subcommands([](const CLI::App*) { return true; })) {
    sub->fallthrough();
  }
  inspect_cmd->add_option("--model", inspect_args.model, "model file (default: fresh build)");
  inspect_cmd->add_option("--family", inspect_args.family, "fresh build family")
      ->check(CLI::IsMember({"custom", "mobilenet"}));
  inspect_cmd->add_option("--width", inspect_args.width, "width multiplier for fresh builds");
  inspect_cmd->add_option("--input-size", inspect_args.input_size,
                          "input size for fresh builds (default 64)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // help lands on stdout
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "ropnet: " << e.what() << "\n\n" << app.help() << std::flush;
    return 1;
  }

  try {
    apply_globals(g);
    if (*synth) return cmd_synth(g, synth_args);
    if (*clean) return cmd_clean(g, clean_args);
    if (*augment) return cmd_augment(g, augment_args);
    if (*split_cmd) return cmd_split(g, split_args);
    if (*train_cmd) return cmd_train(g, train_args);
    if (*eval_cmd) return cmd_eval(g, eval_args);
    if (*vote_cmd) return cmd_vote_eval(g, vote_args);
    if (*predict_cmd) return cmd_predict(g, predict_args);
    if (*bench_cmd) return cmd_bench(g, bench_args);
    if (*inspect_cmd) return cmd_inspect(g, inspect_args);
  } catch (const Error& e) {
    std::cerr << "ropnet: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "ropnet: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
