#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "advdet/attack.hpp"
#include "advdet/gradcheck.hpp"
#include "advdet/losses.hpp"
#include "advdet/model.hpp"
#include "advdet/ops.hpp"
#include "advdet/rng.hpp"

using namespace advdet;
using attacks::Direction;
using attacks::Norm;
using attacks::NormBall;
using attacks::PgdConfig;
using attacks::StepRule;
using nn::Tensor;

namespace {

Tensor random_logits(std::int64_t B, std::int64_t K, Rng& rng, double margin = 0.0) {
  std::vector<double> vals(static_cast<std::size_t>(B * K));
resample:
  for (auto& v : vals) v = rng.uniform(-3.0, 3.0);
  if (margin > 0.0) {
    // keep every pairwise gap above the margin so max/argmax stay stable
    for (std::int64_t i = 0; i < B; ++i)
      for (std::int64_t a = 0; a < K; ++a)
        for (std::int64_t b = a + 1; b < K; ++b)
          if (std::abs(vals[static_cast<std::size_t>(i * K + a)] - vals[static_cast<std::size_t>(i * K + b)]) < margin)
            goto resample;
  }
  return Tensor::from({B, K}, std::move(vals));
}

// L2 distance between a point and the best row of a tensor
double row_l2(const Tensor& t, const std::vector<double>& ref) {
  double sq = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double d = t.data()[i] - ref[i];
    sq += d * d;
  }
  return std::sqrt(sq);
}

}  // namespace

TEST_CASE("projection hand values") {
  SUBCASE("interior L2 point is returned unchanged, same buffer") {
    Tensor d = Tensor::from({2}, {0.3, 0.0});
    Tensor p = attacks::project(d, {Norm::L2, 1.0});
    CHECK(p.impl.get() == d.impl.get());
  }
  SUBCASE("(3,4) projects radially to (0.6,0.8)") {
    Tensor d = Tensor::from({2}, {3.0, 4.0});
    Tensor p = attacks::project(d, {Norm::L2, 1.0});
    CHECK(p.data()[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(p.data()[1] == doctest::Approx(0.8).epsilon(1e-12));
  }
  SUBCASE("Linf clamps coordinatewise") {
    Tensor d = Tensor::from({2}, {0.5, -0.5});
    Tensor p = attacks::project(d, {Norm::Linf, 0.3});
    CHECK(p.data()[0] == 0.3);
    CHECK(p.data()[1] == -0.3);
  }
}

TEST_CASE("projection is exactly idempotent and keeps the ball") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const NormBall ball{trial % 2 == 0 ? Norm::L2 : Norm::Linf, rng.uniform(0.0, 1.5)};
    std::vector<double> vals(6);
    for (auto& v : vals) v = rng.uniform(-2.0, 2.0);
    Tensor d = Tensor::from({2, 3}, std::move(vals));
    Tensor p1 = attacks::project(d, ball);
    Tensor p2 = attacks::project(p1, ball);
    CHECK(p1.values() == p2.values());
    for (int r = 0; r < 2; ++r) {
      if (ball.p == Norm::Linf) {
        for (int j = 0; j < 3; ++j) CHECK(std::abs(p1.data()[r * 3 + j]) <= ball.eps + 1e-12);
      } else {
        double sq = 0.0;
        for (int j = 0; j < 3; ++j) sq += p1.data()[r * 3 + j] * p1.data()[r * 3 + j];
        CHECK(std::sqrt(sq) <= ball.eps * (1.0 + 1e-12) + 1e-12);
      }
    }
  }
}

namespace {

// convex objective ||x - t||^2 per row
attacks::BatchLoss pull_toward(std::vector<double> target, std::int64_t D) {
  return [target = std::move(target), D](const Tensor& x, std::int64_t off) {
    const auto b = x.dim(0);
    std::vector<double> tv(static_cast<std::size_t>(b * D));
    for (std::int64_t i = 0; i < b; ++i)
      std::copy(target.begin() + (off + i) * D, target.begin() + (off + i + 1) * D, tv.begin() + i * D);
    return nn::row_sumsq(nn::sub(x, Tensor::from({b, D}, std::move(tv))));
  };
}

}  // namespace

TEST_CASE("pgd convex oracle matches the analytic projection") {
  // x0 at the origin, wide clip so only the ball binds
  PgdConfig cfg;
  cfg.steps = 200;
  cfg.step_size = 1e-3;
  cfg.rule = StepRule::NormalizedSteepestDescent;
  cfg.clip = {-5.0, 5.0};
  const std::int64_t D = 3;
  Tensor x0 = Tensor::zeros({1, D});

  SUBCASE("L2 ball, target inside") {
    const std::vector<double> t{0.05, -0.08, 0.04};
    auto res = attacks::pgd(pull_toward(t, D), x0, NormBall{Norm::L2, 0.3}, cfg, Direction::Minimize);
    CHECK(row_l2(res.x_adv, t) < 1e-3);
  }
  SUBCASE("L2 ball, target outside projects radially") {
    const std::vector<double> t{0.12, -0.09, 0.08};  // norm ~0.17, ball 0.1
    const NormBall ball{Norm::L2, 0.1};
    double norm = std::sqrt(0.12 * 0.12 + 0.09 * 0.09 + 0.08 * 0.08);
    std::vector<double> expect{0.12 * ball.eps / norm, -0.09 * ball.eps / norm, 0.08 * ball.eps / norm};
    auto res = attacks::pgd(pull_toward(t, D), x0, ball, cfg, Direction::Minimize);
    CHECK(row_l2(res.x_adv, expect) < 1e-3);
  }
  SUBCASE("Linf ball clamps the target per coordinate") {
    const std::vector<double> t{0.13, -0.02, 0.06};
    const NormBall ball{Norm::Linf, 0.1};
    std::vector<double> expect{0.1, -0.02, 0.06};
    auto res = attacks::pgd(pull_toward(t, D), x0, ball, cfg, Direction::Minimize);
    CHECK(row_l2(res.x_adv, expect) < 1e-3);
  }
}

TEST_CASE("eps=0 returns x0 bit-exactly, any step rule") {
  Rng rng(17);
  std::vector<double> xs(2 * 5);
  for (auto& v : xs) v = rng.uniform(0.0, 1.0);
  Tensor x0 = Tensor::from({2, 5}, xs);
  models::Model det = models::init(models::ArchSpec::mlp({5, 8, 1}), 3);
  for (auto rule : {StepRule::Adam, StepRule::NormalizedSteepestDescent}) {
    PgdConfig cfg;
    cfg.steps = 5;
    cfg.step_size = 0.1;
    cfg.rule = rule;
    auto res = attacks::pgd(attacks::detector_bce_attack(det), x0, NormBall{Norm::Linf, 0.0}, cfg,
                            Direction::Maximize);
    CHECK(res.x_adv.values() == xs);
  }
}

TEST_CASE("pgd output is feasible for every step count including zero") {
  Rng rng(23);
  models::Model det = models::init(models::ArchSpec::mlp({4, 8, 1}), 9);
  for (int steps : {0, 1, 7}) {
    for (auto norm : {Norm::L2, Norm::Linf}) {
      std::vector<double> xs(3 * 4);
      for (auto& v : xs) v = rng.uniform(0.0, 1.0);
      Tensor x0 = Tensor::from({3, 4}, xs);
      const NormBall ball{norm, 0.2};
      PgdConfig cfg;
      cfg.steps = steps;
      cfg.step_size = 0.37;  // deliberately oversized
      cfg.random_start = true;
      cfg.seed = static_cast<std::uint64_t>(steps);
      auto res = attacks::pgd(attacks::detector_bce_attack(det), x0, ball, cfg, Direction::Maximize);
      for (int i = 0; i < 3; ++i) {
        double sq = 0.0, linf = 0.0;
        for (int j = 0; j < 4; ++j) {
          const double d = res.x_adv.data()[i * 4 + j] - xs[static_cast<std::size_t>(i * 4 + j)];
          sq += d * d;
          linf = std::max(linf, std::abs(d));
          CHECK(res.x_adv.data()[i * 4 + j] >= 0.0);
          CHECK(res.x_adv.data()[i * 4 + j] <= 1.0);
        }
        if (norm == Norm::L2)
          CHECK(std::sqrt(sq) <= ball.eps * (1 + 1e-9));
        else
          CHECK(linf <= ball.eps + 1e-12);
      }
    }
  }
}

TEST_CASE("attack loss hand values") {
  SUBCASE("classifier margin") {
    Tensor z = Tensor::from({3, 3}, {2, 1, 0, 0, 3, 1, 1, 1, 1});
    Tensor l = attacks::loss_classifier_cw(z, {0, 0, 2});
    CHECK(l.data()[0] == 1.0);
    CHECK(l.data()[1] == -3.0);
    CHECK(l.data()[2] == 0.0);
  }
  SUBCASE("detector loss") {
    Tensor h = Tensor::from({2, 3}, {5, 2, 7, 5, 2, 7});
    Tensor l = attacks::loss_detector(h, {0, 2});
    CHECK(l.data()[0] == -7.0);
    CHECK(l.data()[1] == -5.0);
    Tensor h2 = Tensor::from({1, 2}, {4.0, 9.0});
    CHECK(attacks::loss_detector(h2, {1}).data()[0] == -4.0);
  }
  SUBCASE("surrogate combined") {
    Tensor f = Tensor::from({1, 2}, {1.0, 0.0});
    Tensor h = Tensor::from({1, 2}, {0.0, 0.0});
    CHECK(attacks::loss_surrogate_combined(f, h, {0}).data()[0] == 1.0);
    Tensor f2 = Tensor::from({1, 2}, {0.0, 2.0});
    Tensor h2 = Tensor::from({1, 2}, {0.0, 5.0});
    CHECK(attacks::loss_surrogate_combined(f2, h2, {0}).data()[0] == 0.0);
    Tensor f3 = Tensor::from({1, 2}, {0.0, 0.0});
    CHECK(attacks::loss_surrogate_combined(f3, f3, {1}).data()[0] == 0.0);
  }
  SUBCASE("piecewise combined") {
    Tensor f = Tensor::from({1, 2}, {2.0, 1.0});
    Tensor h = Tensor::from({1, 2}, {9.0, 9.0});
    CHECK(attacks::loss_piecewise_combined(f, h, {0}).data()[0] == 1.0);
    Tensor f2 = Tensor::from({1, 2}, {1.0, 2.0});
    Tensor h2 = Tensor::from({1, 2}, {4.0, 7.0});
    CHECK(attacks::loss_piecewise_combined(f2, h2, {0}).data()[0] == -7.0);
    // boundary: still classified as y, classifier branch applies
    Tensor f3 = Tensor::from({1, 2}, {1.0, 1.0});
    CHECK(attacks::loss_piecewise_combined(f3, h2, {0}).data()[0] == 0.0);
  }
  SUBCASE("targeted logit") {
    Tensor z = Tensor::from({1, 2}, {3.0, -1.0});
    CHECK(attacks::loss_targeted_logit(z, {0}).data()[0] == -3.0);
    Tensor z2 = Tensor::from({1, 2}, {4.0, -1.0});
    CHECK(attacks::loss_targeted_logit(z2, {0}).data()[0] < attacks::loss_targeted_logit(z, {0}).data()[0]);
  }
  SUBCASE("penalized detector") {
    // detector part -5, squared distance 4, c = 1: total -1
    Tensor h = Tensor::from({1, 2}, {0.0, 5.0});
    Tensor x = Tensor::from({1, 2}, {1.0, 2.0});
    Tensor x0 = Tensor::from({1, 2}, {1.0, 0.0});  // ||x-x0||_2 = 2
    CHECK(attacks::loss_penalized_detector(h, {0}, x, x0, 1.0).data()[0] == doctest::Approx(-1.0));
    CHECK(attacks::loss_penalized_detector(h, {0}, x, x, 1.0).data()[0] == doctest::Approx(-5.0));
    Tensor base = attacks::loss_detector(h, {0});
    CHECK(attacks::loss_penalized_detector(h, {0}, x, x0, 0.0).data()[0] == base.data()[0]);
  }
}

TEST_CASE("surrogate loss equals a direct transcription on 1000 random logit pairs") {
  Rng rng(41);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::int64_t K = 2 + static_cast<std::int64_t>(rng.below(5));
    Tensor f = random_logits(1, K, rng);
    Tensor h = random_logits(1, K, rng);
    const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(K)));

    // direct rendering of the surrogate logit list and its margin loss
    double max_h_not_y = -1e300, max_f = -1e300, max_f_not_y = -1e300;
    for (std::int64_t j = 0; j < K; ++j) {
      if (j != y) max_h_not_y = std::max(max_h_not_y, h.data()[j]);
      max_f = std::max(max_f, f.data()[j]);
      if (j != y) max_f_not_y = std::max(max_f_not_y, f.data()[j]);
    }
    std::vector<double> g(static_cast<std::size_t>(K + 1));
    for (std::int64_t j = 0; j < K; ++j) g[static_cast<std::size_t>(j)] = f.data()[j];
    g[static_cast<std::size_t>(K)] = (-max_h_not_y + 1.0) * max_f;
    double max_g = g[0];
    for (double v : g) max_g = std::max(max_g, v);
    const double want = max_g - max_f_not_y;

    CHECK(attacks::loss_surrogate_combined(f, h, {y}).data()[0] == want);
  }
}

TEST_CASE("piecewise loss equals its branch losses off the boundary") {
  Rng rng(43);
  for (int trial = 0; trial < 300; ++trial) {
    Tensor f = random_logits(1, 4, rng, 1e-6);
    Tensor h = random_logits(1, 4, rng);
    const int y = static_cast<int>(rng.below(4));
    const double got = attacks::loss_piecewise_combined(f, h, {y}).data()[0];
    double max_other = -1e300;
    for (int j = 0; j < 4; ++j)
      if (j != y) max_other = std::max(max_other, f.data()[j]);
    if (f.data()[y] >= max_other)
      CHECK(got == attacks::loss_classifier_cw(f, {y}).data()[0]);
    else
      CHECK(got == attacks::loss_detector(h, {y}).data()[0]);
  }
}

TEST_CASE("attack losses pass finite-difference checks at smooth points") {
  Rng rng(53);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Tensor f = random_logits(3, 4, rng, 0.05);
    Tensor h = random_logits(3, 4, rng, 0.05);
    std::vector<int> y;
    for (int i = 0; i < 3; ++i) y.push_back(static_cast<int>(rng.below(4)));

    auto check = [&](auto&& fn) {
      const double err = nn::finite_difference_check(fn, {f, h}, 1e-6, -1, seed);
      CHECK(err < 1e-4);
    };
    check([&](const std::vector<Tensor>& v) { return nn::sum(attacks::loss_classifier_cw(v[0], y)); });
    check([&](const std::vector<Tensor>& v) { return nn::sum(attacks::loss_detector(v[1], y)); });
    check([&](const std::vector<Tensor>& v) { return nn::sum(attacks::loss_surrogate_combined(v[0], v[1], y)); });
    check([&](const std::vector<Tensor>& v) { return nn::sum(attacks::loss_piecewise_combined(v[0], v[1], y)); });

    Tensor x = random_logits(3, 6, rng);
    Tensor x0 = random_logits(3, 6, rng);
    const double err = nn::finite_difference_check(
        [&](const std::vector<Tensor>& v) {
          return nn::sum(attacks::loss_penalized_detector(v[0], y, v[1], x0, 0.7));
        },
        {h, x}, 1e-6, -1, seed);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("aggregate detector is a pure concatenation") {
  models::Model d0 = models::init(models::ArchSpec::mlp({3, 4, 1}), 1);
  models::Model d1 = models::init(models::ArchSpec::mlp({3, 4, 1}), 2);
  Rng rng(5);
  std::vector<double> xs(2 * 3);
  for (auto& v : xs) v = rng.uniform(-1, 1);
  Tensor x = Tensor::from({2, 3}, std::move(xs));
  Tensor agg = attacks::aggregate_detector({d0, d1}, x);
  Tensor z0 = models::logits(d0, x);
  Tensor z1 = models::logits(d1, x);
  for (int i = 0; i < 2; ++i) {
    CHECK(agg.data()[i * 2 + 0] == z0.data()[i]);
    CHECK(agg.data()[i * 2 + 1] == z1.data()[i]);
  }
  Tensor swapped = attacks::aggregate_detector({d1, d0}, x);
  for (int i = 0; i < 2; ++i) {
    CHECK(swapped.data()[i * 2 + 0] == agg.data()[i * 2 + 1]);
    CHECK(swapped.data()[i * 2 + 1] == agg.data()[i * 2 + 0]);
  }
}

TEST_CASE("more restarts never worsen the per-sample best loss") {
  models::Model det = models::init(models::ArchSpec::mlp({4, 16, 1}), 77);
  Rng rng(61);
  std::vector<double> xs(4 * 4);
  for (auto& v : xs) v = rng.uniform(0.0, 1.0);
  Tensor x0 = Tensor::from({4, 4}, std::move(xs));

  std::vector<std::vector<double>> bests;
  for (int restarts : {1, 2, 4, 8}) {
    PgdConfig cfg;
    cfg.steps = 10;
    cfg.step_size = 0.05;
    cfg.restarts = restarts;
    cfg.seed = 99;
    auto res = attacks::pgd(attacks::detector_bce_attack(det), x0, NormBall{Norm::Linf, 0.4}, cfg,
                            Direction::Maximize);
    bests.push_back(res.final_loss);
  }
  for (std::size_t level = 1; level < bests.size(); ++level)
    for (std::size_t i = 0; i < bests[level].size(); ++i)
      CHECK(bests[level][i] >= bests[level - 1][i] - 1e-15);
}

TEST_CASE("synthesize from noise") {
  models::Model det = models::init(models::ArchSpec::mlp({6, 16, 1}), 5);
  Rng rng(71);
  std::vector<double> seed_img(2 * 6);
  for (auto& v : seed_img) v = rng.uniform(-0.3, 1.3);  // clamping required
  Tensor seeds = Tensor::from({2, 6}, seed_img);

  SUBCASE("zero steps returns the clamped seed") {
    PgdConfig cfg;
    cfg.steps = 0;
    auto traj = attacks::synthesize_from_noise(det, seeds, std::nullopt, cfg, {0});
    REQUIRE(traj.size() == 1);
    for (std::size_t i = 0; i < seed_img.size(); ++i)
      CHECK(traj[0].data()[i] == std::clamp(seed_img[i], 0.0, 1.0));
  }
  SUBCASE("logit at the endpoint does not drop, distinct seeds stay distinct") {
    PgdConfig cfg;
    cfg.steps = 60;
    cfg.step_size = 0.02;
    auto traj = attacks::synthesize_from_noise(det, seeds, std::nullopt, cfg, {0, 30, 60});
    REQUIRE(traj.size() == 3);
    auto logit = [&](const Tensor& x, int row) {
      nn::Tensor z = models::logits(det, x);
      return z.data()[row];
    };
    for (int r = 0; r < 2; ++r) CHECK(logit(traj[2], r) >= logit(traj[0], r));
    bool differ = false;
    for (int j = 0; j < 6; ++j) differ = differ || traj[2].data()[j] != traj[2].data()[6 + j];
    CHECK(differ);
  }
}
