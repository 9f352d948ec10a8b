// Command line surface for training per-class detectors, attacking them, and
// evaluating the detection and classification systems built from them.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "advdet/aat.hpp"
#include "advdet/checkpoint.hpp"
#include "advdet/detection.hpp"
#include "advdet/distortion.hpp"
#include "advdet/experiment.hpp"
#include "advdet/gradcheck.hpp"
#include "advdet/losses.hpp"
#include "advdet/mnist_io.hpp"
#include "advdet/ops.hpp"
#include "advdet/protocols.hpp"
#include "advdet/rng.hpp"
#include "advdet/synth.hpp"

namespace {

using namespace advdet;

struct DataOpts {
  std::string data_dir;
  bool mini = false;
};

void add_data_opts(CLI::App* cmd, DataOpts& opts) {
  cmd->add_option("--data-dir", opts.data_dir, "directory with the four IDX files")->required();
  cmd->add_flag("--mini", opts.mini, "use the 2-class desk-scale subsets (10k/2k/test)");
}

Dataset load_split(const DataOpts& opts, const std::string& split) {
  if (opts.mini) {
    io::MiniDataset mini = io::load_mnist_mini(opts.data_dir);
    if (split == "train") return mini.train;
    if (split == "val") return mini.val;
    return mini.test;
  }
  if (split == "train") return io::load_mnist(opts.data_dir, io::MnistSplit::Train50k).data;
  if (split == "val") return io::load_mnist(opts.data_dir, io::MnistSplit::Val10k).data;
  return io::load_mnist(opts.data_dir, io::MnistSplit::Test).data;
}

struct AttackOpts {
  std::string norm = "linf";
  double eps = 0.3;
  bool eps_255 = false;
  int steps = 100;
  double step_size = 0.01;
  std::string rule = "adam";
  int restarts = 1;
  bool random_start = false;
  std::uint64_t seed = 1;
};

void add_attack_opts(CLI::App* cmd, AttackOpts& opts) {
  cmd->add_option("--norm", opts.norm, "l2 or linf")->check(CLI::IsMember({"l2", "linf"}));
  cmd->add_option("--eps", opts.eps, "perturbation budget (0-1 scale unless --eps-255)");
  cmd->add_flag("--eps-255", opts.eps_255, "eps and step size are given on the 0-255 scale");
  cmd->add_option("--steps", opts.steps, "attack steps");
  cmd->add_option("--step-size", opts.step_size, "attack step size");
  cmd->add_option("--rule", opts.rule, "adam or nsd")->check(CLI::IsMember({"adam", "nsd"}));
  cmd->add_option("--restarts", opts.restarts, "attack restarts");
  cmd->add_flag("--random-start", opts.random_start, "draw the first start uniformly inside the ball");
  cmd->add_option("--seed", opts.seed, "attack seed");
}

attacks::NormBall ball_of(const AttackOpts& o) {
  attacks::NormBall ball{o.norm == "l2" ? attacks::Norm::L2 : attacks::Norm::Linf, o.eps};
  if (o.eps_255) ball.eps /= 255.0;
  return ball;
}

attacks::PgdConfig pgd_of(const AttackOpts& o) {
  attacks::PgdConfig cfg;
  cfg.steps = o.steps;
  cfg.step_size = o.eps_255 ? o.step_size / 255.0 : o.step_size;
  cfg.rule = o.rule == "adam" ? attacks::StepRule::Adam : attacks::StepRule::NormalizedSteepestDescent;
  cfg.restarts = o.restarts;
  cfg.random_start = o.random_start;
  cfg.seed = o.seed;
  return cfg;
}

nlohmann::json attack_opts_json(const AttackOpts& o) {
  return io::attack_manifest("", nullptr, pgd_of(o))["pgd"];
}

std::vector<models::Model> load_detectors(const std::vector<std::string>& paths) {
  std::vector<models::Model> dets;
  for (const auto& p : paths) dets.push_back(models::load_checkpoint(p).model);
  return dets;
}

int run_train_classifier(const DataOpts& data, const std::string& out, int epochs, int batch, double lr,
                         std::uint64_t seed) {
  Dataset train = load_split(data, "train");
  Dataset test = load_split(data, "test");
  models::ClassifierTrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = batch;
  cfg.lr = lr;
  cfg.seed = seed;
  auto res = models::train_softmax_classifier(train, &test, models::ArchSpec::mnist_conv(train.num_classes), cfg);
  nlohmann::json meta;
  meta["seed"] = seed;
  meta["epochs"] = epochs;
  meta["lr"] = lr;
  meta["test_accuracy"] = res.test_accuracy;
  meta["config_hash"] = io::config_hash(meta);
  models::save_checkpoint(out, res.model, meta);
  std::cout << "classifier saved to " << out << ", natural test accuracy " << res.test_accuracy << "\n";
  return 0;
}

int run_train_detector(const DataOpts& data, int klass, const std::string& preset, AttackOpts& attack,
                       AttackOpts& val_attack, int epochs, int batch_total, double lr, std::uint64_t seed,
                       int val_max_neg, const std::string& out, const std::string& history_path,
                       const std::string& finetune_from) {
  Dataset train = load_split(data, "train");
  Dataset val = load_split(data, "val");

  aat::AatConfig cfg;
  if (preset == "mnist-mini") {
    cfg = protocols::mini_detector_config(seed);
  } else if (!preset.empty()) {
    bool found = false;
    for (const auto& p : protocols::table3_presets()) {
      if (p.name != preset) continue;
      cfg.arch = models::ArchSpec::mnist_conv(1);
      cfg.train_attack.ball = p.ball;
      cfg.train_attack.pgd = p.train;
      cfg.val_attack = p.val;
      cfg.epochs = 100;
      cfg.optimizer.lr = 1e-4;
      cfg.seed = seed;
      found = true;
    }
    if (!found) throw CLI::ValidationError("--preset", "unknown preset " + preset);
  } else {
    cfg.arch = models::ArchSpec::mnist_conv(1);
    cfg.train_attack.ball = ball_of(attack);
    cfg.train_attack.pgd = pgd_of(attack);
    cfg.val_attack = pgd_of(val_attack);
    cfg.epochs = epochs;
    cfg.batch_total = batch_total;
    cfg.optimizer.lr = lr;
    cfg.seed = seed;
    cfg.val_max_negatives = val_max_neg;
  }

  for (const auto& warning : aat::attack_config_warnings(cfg.train_attack))
    std::cerr << "warning: " << warning << "\n";

  aat::TrainResult res;
  nlohmann::json meta;
  if (finetune_from.empty()) {
    res = aat::train_detector(train, val, klass, cfg);
  } else {
    models::Model f = models::load_checkpoint(finetune_from).model;
    // the finetune recipe optimizes the inner maximization with normalized
    // steepest descent
    cfg.train_attack.pgd.rule = attacks::StepRule::NormalizedSteepestDescent;
    cfg.val_attack.rule = attacks::StepRule::NormalizedSteepestDescent;
    res = aat::finetune_detector_from_classifier(f, train, val, klass, cfg);
    meta["finetuned_from"] = finetune_from;
  }

  meta["class"] = klass;
  meta["aat"] = io::aat_to_json(cfg);
  meta["best_epoch"] = res.best_epoch;
  meta["best_adv_auc"] = res.best_adv_auc;
  const std::string hash = io::config_hash(meta["aat"]);
  meta["config_hash"] = hash;
  models::save_checkpoint(out, res.best_model, meta);
  if (!history_path.empty()) aat::write_history_csv(history_path, res.history, hash);
  std::cout << "detector " << klass << " saved to " << out << ", best epoch " << res.best_epoch << ", val adv AUC "
            << res.best_adv_auc << "\n";
  return 0;
}

struct LoadedSystem {
  detect::DetectionSystem sys;
  std::vector<models::Model> detectors;
};

LoadedSystem load_system(const std::string& classifier_path, const std::vector<std::string>& detector_paths) {
  LoadedSystem ls;
  ls.detectors = load_detectors(detector_paths);
  for (auto& d : ls.detectors) d.set_params_requires_grad(false);
  if (!classifier_path.empty()) {
    ls.sys.classifier = models::load_checkpoint(classifier_path).model;
    ls.sys.classifier.set_params_requires_grad(false);
  }
  ls.sys.detectors = ls.detectors;
  ls.sys.thresholds.assign(ls.detectors.size(), 0.0);
  return ls;
}

attacks::BatchLoss make_attack_loss(const std::string& mode, const LoadedSystem& ls, const std::vector<int>& labels,
                                    int target, attacks::Direction& dir) {
  dir = attacks::Direction::Minimize;
  if (mode == "classifier") return attacks::classifier_attack(ls.sys.classifier, labels);
  if (mode == "detectors") return attacks::detectors_attack(ls.detectors, labels);
  if (mode == "combined") return attacks::combined_attack(ls.sys.classifier, ls.detectors, labels);
  if (mode == "combined-surrogate")
    return attacks::combined_surrogate_attack(ls.sys.classifier, ls.detectors, labels);
  if (mode == "detectors-xent") {
    dir = attacks::Direction::Maximize;
    return attacks::detectors_xent_attack(ls.detectors, labels);
  }
  if (mode == "targeted")
    return attacks::targeted_generative_attack(ls.detectors, std::vector<int>(labels.size(), target));
  throw CLI::ValidationError("--mode", "unknown attack mode " + mode);
}

int run_attack(const DataOpts& data, const std::string& mode, const std::string& classifier_path,
               const std::vector<std::string>& detector_paths, AttackOpts& aopts, int count, int target,
               const std::string& out_prefix, const std::vector<int>& snapshot_steps) {
  LoadedSystem ls = load_system(classifier_path, detector_paths);
  Dataset test = load_split(data, "test");
  if (count > 0) test = test.head(count);

  const attacks::NormBall ball = ball_of(aopts);
  attacks::PgdConfig pgd = pgd_of(aopts);

  nn::Tensor x_adv;
  std::vector<double> final_loss;
  std::string loss_kind = mode;
  if (mode == "noise-synthesize") {
    // seed images drawn from the per-class Gaussian of the training split
    Dataset train = load_split(data, "train");
    nn::Tensor seeds = protocols::class_conditional_gaussian_seed(train, target, count > 0 ? count : 16, aopts.seed);
    auto traj = attacks::synthesize_from_noise(ls.detectors.at(static_cast<std::size_t>(target)), seeds,
                                               ball.eps > 0 ? std::optional<attacks::NormBall>(ball) : std::nullopt,
                                               pgd, snapshot_steps);
    for (std::size_t s = 0; s < traj.size(); ++s)
      io::write_tensor_dump(out_prefix + ".step" + std::to_string(snapshot_steps.empty() ? pgd.steps
                                                                                         : snapshot_steps[s]) +
                                ".bin",
                            traj[s]);
    x_adv = traj.back();
    final_loss.assign(static_cast<std::size_t>(x_adv.dim(0)), 0.0);
  } else {
    attacks::Direction dir;
    auto loss = make_attack_loss(mode, ls, test.labels, target, dir);
    auto res = attacks::pgd(loss, test.images, ball, pgd, dir);
    x_adv = res.x_adv;
    final_loss = res.final_loss;
    io::write_tensor_dump(out_prefix + ".bin", x_adv);
  }

  nlohmann::json manifest = io::attack_manifest(loss_kind, &ball, pgd);
  manifest["count"] = x_adv.dim(0);
  manifest["config_hash"] = io::config_hash(manifest);
  auto& per_sample = manifest["samples"] = nlohmann::json::array();
  const auto D = x_adv.dim(1);
  for (std::int64_t i = 0; i < x_adv.dim(0); ++i) {
    double l2 = 0.0, linf = 0.0;
    if (mode != "noise-synthesize") {
      for (std::int64_t d = 0; d < D; ++d) {
        const double diff = x_adv.data()[i * D + d] - test.images.data()[i * D + d];
        l2 += diff * diff;
        linf = std::max(linf, std::abs(diff));
      }
    }
    per_sample.push_back({{"final_loss", final_loss[static_cast<std::size_t>(i)]},
                          {"l2", std::sqrt(l2)},
                          {"linf", linf}});
  }
  io::atomic_write(out_prefix + ".json", manifest.dump(2) + "\n");
  std::cout << "attack artifacts written to " << out_prefix << ".{bin,json}\n";
  return 0;
}

int run_evaluate(const DataOpts& data, const std::string& eval_mode, const std::string& attack_mode,
                 const std::string& classifier_path, const std::vector<std::string>& detector_paths,
                 AttackOpts& aopts, int count, int threshold_count, const std::string& out_prefix) {
  LoadedSystem ls = load_system(classifier_path, detector_paths);
  Dataset test = load_split(data, "test");
  if (count > 0) test = test.head(count);

  attacks::Direction dir;
  auto loss = make_attack_loss(attack_mode, ls, test.labels, 0, dir);
  auto adv = attacks::pgd(loss, test.images, ball_of(aopts), pgd_of(aopts), dir);

  std::vector<detect::LabeledScore> nat, per;
  if (eval_mode == "generative") {
    nat = detect::generative_scores(ls.detectors, test.images, test.labels, true);
    per = detect::generative_scores(ls.detectors, adv.x_adv, test.labels, false);
  } else {
    nat = detect::integrated_scores(ls.sys, test.images, test.labels, true);
    per = detect::integrated_scores(ls.sys, adv.x_adv, test.labels, false);
  }

  nlohmann::json meta;
  meta["eval_mode"] = eval_mode;
  const attacks::NormBall ball = ball_of(aopts);
  meta["attack"] = io::attack_manifest(attack_mode, &ball, pgd_of(aopts));
  meta["samples"] = test.size();
  meta["config_hash"] = io::config_hash(meta);
  auto report = detect::roc_sweep(nat, per, detect::quantile_thresholds(nat, threshold_count), meta);
  io::atomic_write(out_prefix + ".json", detect::report_to_json(report));
  io::atomic_write(out_prefix + ".csv", detect::report_to_csv(report));
  std::cout << "evaluation report written to " << out_prefix << ".{json,csv}\n";
  return 0;
}

int run_distortion(const DataOpts& data, const std::vector<std::string>& detector_paths, int count, double tpr_target,
                   double c_lo, double c_hi, int depth, int steps, double step_size, const std::string& out_prefix) {
  LoadedSystem ls = load_system("", detector_paths);
  Dataset test = load_split(data, "test");
  Dataset probe = count > 0 ? test.head(count) : test;

  const auto nat = detect::generative_scores(ls.detectors, test.images, test.labels, true);
  std::vector<double> scores;
  for (const auto& s : nat) scores.push_back(s.score);

  distortion::BsearchConfig cfg;
  cfg.c_lo = c_lo;
  cfg.c_hi = c_hi;
  cfg.c_init = c_lo;
  cfg.depth = depth;
  cfg.pgd.steps = steps;
  cfg.pgd.step_size = step_size;
  cfg.threshold = distortion::threshold_for_tpr(scores, tpr_target);

  auto summary = distortion::mean_l2_distortion(ls.detectors, probe, cfg);
  nlohmann::json j;
  j["threshold"] = cfg.threshold;
  j["tpr_target"] = tpr_target;
  j["mean_l2"] = summary.mean_l2;
  j["achieved_fpr"] = summary.achieved_fpr;
  j["successes"] = summary.successes;
  j["total"] = summary.total;
  j["config_hash"] = io::config_hash(j);
  io::atomic_write(out_prefix + ".json", j.dump(2) + "\n");
  distortion::write_trace_csv(out_prefix + "_trace.csv", summary.traces, j["config_hash"].get<std::string>());
  std::cout << "mean L2 distortion " << summary.mean_l2 << " at FPR " << summary.achieved_fpr << "\n";
  return 0;
}

int run_robustness_sweep(const DataOpts& data, const std::string& detector_path, int klass, const std::string& grid,
                         AttackOpts& aopts, int count, const std::string& out_path) {
  models::Model det = models::load_checkpoint(detector_path).model;
  det.set_params_requires_grad(false);
  Dataset test = load_split(data, "test");
  Dataset pos = test.subset(test.indices_of_class(klass));
  Dataset neg = test.subset(test.indices_not_of_class(klass));
  if (count > 0) neg = neg.head(count);

  nlohmann::json cj;
  cj["grid"] = grid;
  cj["class"] = klass;
  cj["ball"] = io::ball_to_json(ball_of(aopts));
  const std::string hash = io::config_hash(cj);

  std::ostringstream csv;
  csv << "# config_hash=" << hash << "\n";
  csv << "steps,step_size,restarts,auc\n";
  std::stringstream points(grid);
  std::string point;
  while (std::getline(points, point, ';')) {
    if (point.empty()) continue;
    int steps = 0, restarts = 1;
    double step_size = 0.0;
    char c1 = 0, c2 = 0;
    std::stringstream ps(point);
    ps >> steps >> c1 >> step_size >> c2 >> restarts;
    if (!ps || c1 != ',' || c2 != ',')
      throw CLI::ValidationError("--grid", "expected steps,step_size,restarts[;...], got " + point);
    attacks::PgdConfig pgd = pgd_of(aopts);
    pgd.steps = steps;
    pgd.step_size = aopts.eps_255 ? step_size / 255.0 : step_size;
    pgd.restarts = restarts;
    pgd.random_start = restarts > 1;
    auto adv = attacks::pgd(attacks::detector_bce_attack(det), neg.images, ball_of(aopts), pgd,
                            attacks::Direction::Maximize);
    const double auc = aat::detector_auc(det, pos.images, adv.x_adv);
    csv.precision(17);
    csv << steps << "," << step_size << "," << restarts << "," << auc << "\n";
    std::cout << "steps " << steps << " step " << step_size << " restarts " << restarts << " -> AUC " << auc << "\n";
  }
  io::atomic_write(out_path, csv.str());
  return 0;
}

int run_gradcheck() {
  Rng rng(2024);
  double worst = 0.0;
  auto probe = [&](const char* name, const nn::ScalarFn& fn, const std::vector<nn::Tensor>& point, double h) {
    const double err = nn::finite_difference_check(fn, point, h);
    worst = std::max(worst, err);
    std::cout << name << ": max rel err " << err << "\n";
  };
  auto rnd = [&](nn::Shape s) {
    std::vector<double> v(static_cast<std::size_t>(nn::shape_numel(s)));
    for (auto& x : v) {
      x = rng.uniform(-1.0, 1.0);
      if (std::abs(x) < 0.05) x += x >= 0 ? 0.1 : -0.1;
    }
    return nn::Tensor::from(std::move(s), std::move(v));
  };
  probe("affine+relu+sigmoid", [](const std::vector<nn::Tensor>& v) {
    return nn::sum(nn::sigmoid(nn::relu(nn::affine(v[0], v[1], v[2]))));
  }, {rnd({4, 3}), rnd({3, 5}), rnd({5})}, 1e-5);
  probe("conv+pool", [](const std::vector<nn::Tensor>& v) {
    return nn::sum(nn::maxpool2x2(nn::conv2d_same(v[0], v[1], v[2])));
  }, {rnd({2, 6, 6, 2}), rnd({3, 3, 2, 4}), rnd({4})}, 1e-6);
  std::vector<int> y{1, 0, 2};
  probe("attack losses", [y](const std::vector<nn::Tensor>& v) {
    return nn::sum(nn::add(attacks::loss_piecewise_combined(v[0], v[1], y),
                           attacks::loss_surrogate_combined(v[0], v[1], y)));
  }, {rnd({3, 4}), rnd({3, 4})}, 1e-6);
  std::cout << (worst < 1e-4 ? "gradcheck OK" : "gradcheck FAILED") << " (worst " << worst << ")\n";
  return worst < 1e-4 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"asymmetrical adversarial training toolkit"};
  app.require_subcommand(1);

  // train-classifier
  auto* tc = app.add_subcommand("train-classifier", "natural softmax training");
  DataOpts tc_data;
  add_data_opts(tc, tc_data);
  int tc_epochs = 5, tc_batch = 64;
  double tc_lr = 1e-3;
  std::uint64_t tc_seed = 1;
  std::string tc_out = "classifier.ckpt";
  tc->add_option("--epochs", tc_epochs);
  tc->add_option("--batch", tc_batch);
  tc->add_option("--lr", tc_lr);
  tc->add_option("--seed", tc_seed);
  tc->add_option("--out", tc_out);

  // train-detector / finetune-detector
  auto* td = app.add_subcommand("train-detector", "asymmetrical adversarial training of one detector");
  auto* fd = app.add_subcommand("finetune-detector", "detector initialized from a classifier logit");
  DataOpts td_data, fd_data;
  int td_class = 0;
  std::string td_preset;
  AttackOpts td_attack, td_val;
  td_val.steps = 200;
  int td_epochs = 1, td_batch_total = 128, td_val_max_neg = 96;
  double td_lr = 1e-3;
  std::uint64_t td_seed = 1;
  std::string td_out = "detector.ckpt", td_history, fd_classifier;
  for (auto* cmd : {td, fd}) {
    add_data_opts(cmd, cmd == td ? td_data : fd_data);
    cmd->add_option("--class", td_class, "detector class k")->required();
    cmd->add_option("--preset", td_preset, "mnist-mini | linf-0.3 | linf-0.5 | l2-2.5 | l2-5.0 (full-scale presets are long-running)");
    cmd->add_option("--attack-steps", td_attack.steps);
    cmd->add_option("--attack-step-size", td_attack.step_size);
    cmd->add_option("--norm", td_attack.norm)->check(CLI::IsMember({"l2", "linf"}));
    cmd->add_option("--eps", td_attack.eps);
    cmd->add_flag("--eps-255", td_attack.eps_255);
    cmd->add_option("--attack-rule", td_attack.rule)->check(CLI::IsMember({"adam", "nsd"}));
    cmd->add_option("--val-steps", td_val.steps);
    cmd->add_option("--val-step-size", td_val.step_size);
    cmd->add_option("--epochs", td_epochs);
    cmd->add_option("--batch-total", td_batch_total);
    cmd->add_option("--lr", td_lr);
    cmd->add_option("--seed", td_seed);
    cmd->add_option("--val-max-negatives", td_val_max_neg);
    cmd->add_option("--out", td_out);
    cmd->add_option("--history", td_history, "training history CSV path");
  }
  fd->add_option("--classifier", fd_classifier, "classifier checkpoint to slice")->required();

  // attack
  auto* at = app.add_subcommand("attack", "craft a perturbed set");
  DataOpts at_data;
  add_data_opts(at, at_data);
  std::string at_mode = "classifier", at_classifier, at_out = "attack_out";
  std::vector<std::string> at_detectors;
  AttackOpts at_opts;
  int at_count = 0, at_target = 0;
  std::vector<int> at_snapshots;
  at->add_option("--mode", at_mode,
                 "classifier | detectors | combined | combined-surrogate | detectors-xent | targeted | noise-synthesize")
      ->required();
  at->add_option("--classifier", at_classifier);
  at->add_option("--detectors", at_detectors, "detector checkpoints in class order");
  add_attack_opts(at, at_opts);
  at->add_option("--count", at_count, "limit the number of attacked samples");
  at->add_option("--target", at_target, "target class for targeted / noise-synthesize");
  at->add_option("--snapshots", at_snapshots, "trajectory step checkpoints for noise-synthesize");
  at->add_option("--out-prefix", at_out);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "threshold sweep report against one attack");
  DataOpts ev_data;
  add_data_opts(ev, ev_data);
  std::string ev_mode = "integrated", ev_attack_mode = "combined", ev_classifier, ev_out = "report";
  std::vector<std::string> ev_detectors;
  AttackOpts ev_opts;
  int ev_count = 0, ev_thresholds = 512;
  ev->add_option("--mode", ev_mode, "integrated | generative | classify-reject")
      ->check(CLI::IsMember({"integrated", "generative", "classify-reject"}));
  ev->add_option("--attack-mode", ev_attack_mode);
  ev->add_option("--classifier", ev_classifier);
  ev->add_option("--detectors", ev_detectors)->required();
  add_attack_opts(ev, ev_opts);
  ev->add_option("--count", ev_count);
  ev->add_option("--thresholds", ev_thresholds);
  ev->add_option("--out-prefix", ev_out);

  // distortion
  auto* di = app.add_subcommand("distortion", "binary-search mean L2 distortion protocol");
  DataOpts di_data;
  add_data_opts(di, di_data);
  std::vector<std::string> di_detectors;
  int di_count = 16, di_depth = 20, di_steps = 1000;
  double di_tpr = 0.95, di_clo = 0.0, di_chi = 8.0, di_step_size = 1.0;
  std::string di_out = "distortion";
  di->add_option("--detectors", di_detectors)->required();
  di->add_option("--count", di_count);
  di->add_option("--tpr", di_tpr);
  di->add_option("--c-lo", di_clo);
  di->add_option("--c-hi", di_chi);
  di->add_option("--depth", di_depth);
  di->add_option("--steps", di_steps);
  di->add_option("--step-size", di_step_size);
  di->add_option("--out-prefix", di_out);

  // robustness-sweep
  auto* rs = app.add_subcommand("robustness-sweep", "AUC over a steps x step-size x restarts grid");
  DataOpts rs_data;
  add_data_opts(rs, rs_data);
  std::string rs_detector, rs_grid = "100,0.01,1;200,0.01,1", rs_out = "sweep.csv";
  int rs_class = 0, rs_count = 128;
  AttackOpts rs_opts;
  rs->add_option("--detector", rs_detector)->required();
  rs->add_option("--class", rs_class)->required();
  rs->add_option("--grid", rs_grid, "semicolon-separated steps,step_size,restarts triples");
  add_attack_opts(rs, rs_opts);
  rs->add_option("--count", rs_count, "attacked out-of-class samples");
  rs->add_option("--out", rs_out);

  // synth-1d / synth-2d
  auto* s1 = app.add_subcommand("synth-1d", "1D density recovery benchmark");
  std::string s1_out = ".";
  std::uint64_t s1_seed = 20250810;
  int s1_epochs = 200;
  s1->add_option("--out-dir", s1_out);
  s1->add_option("--seed", s1_seed);
  s1->add_option("--epochs", s1_epochs);

  auto* s2 = app.add_subcommand("synth-2d", "2D sigmoid field benchmark");
  std::string s2_out = ".", s2_kind = "moons";
  std::uint64_t s2_seed = 20250810;
  int s2_epochs = 60;
  s2->add_option("--out-dir", s2_out);
  s2->add_option("--kind", s2_kind)->check(CLI::IsMember({"circles", "moons", "grid-scatter"}));
  s2->add_option("--seed", s2_seed);
  s2->add_option("--epochs", s2_epochs);

  auto* gc = app.add_subcommand("gradcheck", "finite-difference verification of the gradients");

  CLI11_PARSE(app, argc, argv);

  try {
    if (tc->parsed()) return run_train_classifier(tc_data, tc_out, tc_epochs, tc_batch, tc_lr, tc_seed);
    if (td->parsed())
      return run_train_detector(td_data, td_class, td_preset, td_attack, td_val, td_epochs, td_batch_total, td_lr,
                                td_seed, td_val_max_neg, td_out, td_history, "");
    if (fd->parsed())
      return run_train_detector(fd_data, td_class, td_preset, td_attack, td_val, td_epochs, td_batch_total, td_lr,
                                td_seed, td_val_max_neg, td_out, td_history, fd_classifier);
    if (at->parsed())
      return run_attack(at_data, at_mode, at_classifier, at_detectors, at_opts, at_count, at_target, at_out,
                        at_snapshots);
    if (ev->parsed())
      return run_evaluate(ev_data, ev_mode, ev_attack_mode, ev_classifier, ev_detectors, ev_opts, ev_count,
                          ev_thresholds, ev_out);
    if (di->parsed())
      return run_distortion(di_data, di_detectors, di_count, di_tpr, di_clo, di_chi, di_depth, di_steps, di_step_size,
                            di_out);
    if (rs->parsed())
      return run_robustness_sweep(rs_data, rs_detector, rs_class, rs_grid, rs_opts, rs_count, rs_out);
    if (s1->parsed()) {
      std::filesystem::create_directories(s1_out);
      protocols::Density1dConfig cfg;
      cfg.seed = s1_seed;
      cfg.epochs = s1_epochs;
      auto res = protocols::run_density_1d(cfg);
      protocols::write_density_1d_artifacts(s1_out, cfg, res);
      std::cout << "TV(adversarial) " << res.tv_aat << "  TV(ordinary) " << res.tv_ordinary << "\n";
      return 0;
    }
    if (s2->parsed()) {
      std::filesystem::create_directories(s2_out);
      protocols::Field2dConfig cfg;
      cfg.seed = s2_seed;
      cfg.epochs = s2_epochs;
      cfg.data.seed = s2_seed;
      if (s2_kind == "circles") cfg.data.kind = synth::Toy2DKind::Circles;
      if (s2_kind == "grid-scatter") cfg.data.kind = synth::Toy2DKind::GridScatter;
      auto res = protocols::run_field_2d(cfg);
      protocols::write_field_2d_artifacts(s2_out, cfg, res);
      std::cout << "in-class mean sigmoid " << res.inclass_mean_sigmoid << ", far-field mean sigmoid "
                << res.farfield_mean_sigmoid << "\n";
      return 0;
    }
    if (gc->parsed()) return run_gradcheck();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
