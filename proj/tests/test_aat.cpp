#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "advdet/aat.hpp"
#include "advdet/losses.hpp"
#include "advdet/model.hpp"
#include "advdet/ops.hpp"
#include "advdet/rng.hpp"

using namespace advdet;
using models::ArchSpec;

namespace {

// 1D two-class data: class 1 clustered near 0.7, class 0 near 0.2
Dataset line_dataset(int per_class, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> xs;
  std::vector<int> labels;
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < per_class; ++i) {
      xs.push_back((c == 1 ? 0.7 : 0.2) + 0.03 * rng.normal());
      labels.push_back(c);
    }
  Dataset d;
  d.images = nn::Tensor::from({2 * per_class, 1}, std::move(xs));
  d.labels = std::move(labels);
  d.num_classes = 2;
  return d;
}

aat::AatConfig tiny_config(std::uint64_t seed) {
  aat::AatConfig cfg;
  cfg.arch = ArchSpec::mlp({1, 16, 1});
  cfg.batch_total = 32;
  cfg.train_attack.ball = {attacks::Norm::Linf, 0.1};
  cfg.train_attack.pgd.steps = 5;
  cfg.train_attack.pgd.step_size = 0.02;
  cfg.val_attack = cfg.train_attack.pgd;
  cfg.val_attack.steps = 8;
  cfg.epochs = 2;
  cfg.optimizer.lr = 1e-2;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("balanced batches match counts and class membership") {
  Dataset d = line_dataset(200, 3);
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    auto batch = aat::make_balanced_batch(d, 1, 64, rng);
    CHECK(batch.positives.size() == batch.negatives.size());
    CHECK(batch.positives.size() > 0);
    for (auto i : batch.positives) CHECK(d.labels[static_cast<std::size_t>(i)] == 1);
    for (auto i : batch.negatives) CHECK(d.labels[static_cast<std::size_t>(i)] != 1);
  }
}

TEST_CASE("class absent from the data errors after bounded redraws") {
  Dataset d = line_dataset(50, 5);
  Rng rng(1);
  CHECK_THROWS_AS(aat::make_balanced_batch(d, 7, 16, rng, 5), std::runtime_error);
}

TEST_CASE("skewed draws resample negatives with replacement") {
  // 90% of the data is class 1, so negatives must repeat to match positives
  Rng rng(9);
  std::vector<double> xs;
  std::vector<int> labels;
  for (int i = 0; i < 90; ++i) {
    xs.push_back(0.8);
    labels.push_back(1);
  }
  for (int i = 0; i < 10; ++i) {
    xs.push_back(0.1);
    labels.push_back(0);
  }
  Dataset d;
  d.images = nn::Tensor::from({100, 1}, std::move(xs));
  d.labels = std::move(labels);
  auto batch = aat::make_balanced_batch(d, 1, 100, rng);
  CHECK(batch.positives.size() == 90);
  CHECK(batch.negatives.size() == 90);
}

TEST_CASE("aat step") {
  Dataset d = line_dataset(40, 21);
  Dataset pos = d.subset(d.indices_of_class(1));
  Dataset neg = d.subset(d.indices_not_of_class(1));

  SUBCASE("positives are never touched and eps=0 reduces to plain training") {
    models::Model det = models::init(ArchSpec::mlp({1, 16, 1}), 2);
    models::Adam opt(models::AdamConfig{.lr = 1e-2});
    aat::AttackSpec attack;
    attack.ball = {attacks::Norm::Linf, 0.0};
    attack.pgd.steps = 4;
    attack.pgd.step_size = 0.1;
    const auto pos_before = pos.images.values();
    const auto neg_before = neg.images.values();
    auto r0 = aat::aat_step(det, pos.images, neg.images, attack, opt);
    CHECK(pos.images.values() == pos_before);
    CHECK(neg.images.values() == neg_before);

    double last = r0.loss;
    for (int i = 0; i < 30; ++i) last = aat::aat_step(det, pos.images, neg.images, attack, opt).loss;
    CHECK(last < r0.loss);
  }

  SUBCASE("adversarial budget raises the negative-term loss") {
    models::Model det_a = models::init(ArchSpec::mlp({1, 16, 1}), 2);
    models::Model det_b = det_a.clone();
    models::Adam oa(models::AdamConfig{.lr = 1e-3}), ob(models::AdamConfig{.lr = 1e-3});
    aat::AttackSpec plain;
    plain.ball = {attacks::Norm::Linf, 0.0};
    plain.pgd.steps = 5;
    plain.pgd.step_size = 0.05;
    aat::AttackSpec budget = plain;
    budget.ball.eps = 0.2;
    const double plain_neg = aat::aat_step(det_a, pos.images, neg.images, plain, oa).adv_neg_bce;
    const double adv_neg = aat::aat_step(det_b, pos.images, neg.images, budget, ob).adv_neg_bce;
    CHECK(adv_neg >= plain_neg);
  }
}

TEST_CASE("dropping the routing constraint upper-bounds the constrained maximum") {
  // enumerate a delta grid on a 2D toy; the constrained max never exceeds the
  // unconstrained one
  Rng rng(33);
  int nonempty = 0;
  for (int instance = 0; instance < 100; ++instance) {
    models::Model f = models::init(ArchSpec::mlp({2, 8, 3}), mix_seed(100, instance));
    models::Model h = models::init(ArchSpec::mlp({2, 8, 1}), mix_seed(200, instance));
    const double x0 = rng.uniform(0.2, 0.8), x1 = rng.uniform(0.2, 0.8);
    const int k = static_cast<int>(rng.below(3));
    const double eps = 0.5;
    const int G = 15;

    std::vector<double> pts;
    for (int a = 0; a < G; ++a)
      for (int b = 0; b < G; ++b) {
        pts.push_back(x0 + eps * (2.0 * a / (G - 1) - 1.0));
        pts.push_back(x1 + eps * (2.0 * b / (G - 1) - 1.0));
      }
    nn::Tensor grid = nn::Tensor::from({G * G, 2}, std::move(pts));
    nn::Tensor hz = models::logits(h, grid);
    nn::Tensor losses = attacks::loss_inner_max_bce(hz);
    nn::Tensor fz = models::logits(f, grid);

    double max_unconstrained = -1e300, max_constrained = -1e300;
    bool any = false;
    for (int i = 0; i < G * G; ++i) {
      const double L = losses.data()[i];
      max_unconstrained = std::max(max_unconstrained, L);
      const double* row = fz.data() + i * 3;
      int arg = 0;
      for (int j = 1; j < 3; ++j)
        if (row[j] > row[arg]) arg = j;
      if (arg == k) {
        any = true;
        max_constrained = std::max(max_constrained, L);
      }
    }
    if (any) {
      ++nonempty;
      CHECK(max_constrained <= max_unconstrained + 1e-12);
    }
  }
  CHECK(nonempty > 10);  // the comparison must actually exercise both sides
}

TEST_CASE("train_detector with zero epochs returns the initialized model") {
  Dataset d = line_dataset(30, 8);
  aat::AatConfig cfg = tiny_config(5);
  cfg.epochs = 0;
  auto res = aat::train_detector(d, d, 1, cfg);
  CHECK(res.history.empty());
  CHECK(res.best_epoch == -1);
  models::Model fresh = models::init(cfg.arch, mix_seed(cfg.seed, 0xDE7u, 1));
  REQUIRE(fresh.params.size() == res.best_model.params.size());
  for (std::size_t i = 0; i < fresh.params.size(); ++i)
    CHECK(fresh.params[i].second.values() == res.best_model.params[i].second.values());
}

TEST_CASE("train_detector is bit-reproducible for a fixed seed") {
  Dataset train = line_dataset(40, 13);
  Dataset val = line_dataset(20, 14);
  aat::AatConfig cfg = tiny_config(99);
  auto a = aat::train_detector(train, val, 1, cfg);
  auto b = aat::train_detector(train, val, 1, cfg);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    CHECK(a.history[e].train_bce == b.history[e].train_bce);
    CHECK(a.history[e].nat_auc == b.history[e].nat_auc);
    CHECK(a.history[e].adv_auc == b.history[e].adv_auc);
  }
  for (std::size_t i = 0; i < a.best_model.params.size(); ++i)
    CHECK(a.best_model.params[i].second.values() == b.best_model.params[i].second.values());
}

TEST_CASE("training separates a tiny problem under attack") {
  Dataset train = line_dataset(60, 15);
  Dataset val = line_dataset(30, 16);
  aat::AatConfig cfg = tiny_config(7);
  cfg.epochs = 8;
  auto res = aat::train_detector(train, val, 1, cfg);
  CHECK(res.best_adv_auc > 0.95);
  CHECK(res.history.size() == 8);
}

TEST_CASE("finetuning starts ahead of training from scratch") {
  Dataset train = line_dataset(60, 17);
  Dataset val = line_dataset(30, 18);
  models::ClassifierTrainConfig ccfg;
  ccfg.epochs = 40;
  ccfg.batch_size = 16;
  ccfg.lr = 1e-2;
  auto clf = models::train_softmax_classifier(train, nullptr, ArchSpec::mlp({1, 16, 2}), ccfg);

  aat::AatConfig cfg = tiny_config(5);
  cfg.epochs = 1;
  auto scratch = aat::train_detector(train, val, 1, cfg);
  auto tuned = aat::finetune_detector_from_classifier(clf.model, train, val, 1, cfg);
  CHECK(tuned.history[0].adv_auc >= scratch.history[0].adv_auc);
}

TEST_CASE("attack schedule warnings") {
  aat::AttackSpec ok;
  ok.ball = {attacks::Norm::Linf, 0.3};
  ok.pgd.steps = 100;
  ok.pgd.step_size = 0.01;
  CHECK(aat::attack_config_warnings(ok).empty());

  aat::AttackSpec shallow = ok;
  shallow.pgd.steps = 10;  // 0.1 < 2*eps
  CHECK(aat::attack_config_warnings(shallow).size() == 1);

  aat::AttackSpec coarse = ok;
  coarse.pgd.step_size = 1.0;  // >= eps/2 and plenty of reach
  CHECK(aat::attack_config_warnings(coarse).size() == 1);
}

TEST_CASE("history csv layout") {
  std::vector<aat::EpochStats> history{{1, 0.5, 0.9, 0.8, 1.25}};
  const std::string path = "/tmp/advdet_history_test.csv";
  aat::write_history_csv(path, history);
  std::FILE* f = std::fopen(path.c_str(), "r");
  REQUIRE(f);
  char line[256];
  REQUIRE(std::fgets(line, sizeof(line), f));
  CHECK(std::string(line) == "epoch,train_bce,nat_auc,adv_auc,wall_seconds\n");
  std::fclose(f);
  std::remove(path.c_str());
}
