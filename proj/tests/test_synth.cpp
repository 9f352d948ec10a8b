#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "advdet/synth.hpp"

using namespace advdet;

namespace {

// fine-quadrature oracle for the TV distance between the uniform density and
// the closed-form mixture, using erf-based mass inside bisected crossings
double tv_uniform_vs_mixture_oracle(const synth::MixtureSpec1D& spec) {
  auto cdf = [&](double x) {
    double total = 0.0, mass = 0.0;
    for (const auto& c : spec.components) total += c.count;
    for (const auto& c : spec.components)
      mass += (c.count / total) * 0.5 * (1.0 + std::erf((x - c.mean) / (c.std * std::sqrt(2.0))));
    return mass;
  };
  auto pdf = [&](double x) { return synth::mixture_pdf(spec, x); };
  // crossing of p(x) = 1 between lo and hi by bisection
  auto crossing = [&](double lo, double hi) {
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      if ((pdf(lo) - 1.0) * (pdf(mid) - 1.0) <= 0.0)
        hi = mid;
      else
        lo = mid;
    }
    return 0.5 * (lo + hi);
  };
  // each tight component exceeds 1 inside [x_in, x_out] around its mean
  double excess = 0.0;
  for (const auto& c : spec.components) {
    const double a = crossing(c.mean - 20.0 * c.std, c.mean);
    const double b = crossing(c.mean, c.mean + 20.0 * c.std);
    excess += (cdf(b) - cdf(a)) - (b - a);
  }
  return excess;  // TV = (1/2) * 2 * integral of (p - 1) over {p > 1}
}

}  // namespace

TEST_CASE("1d sampling counts and determinism") {
  const auto spec = synth::MixtureSpec1D::two_modes();
  Dataset d = synth::sample_1d(spec, 7);
  CHECK(d.size() == 1000);
  std::int64_t pos = 0;
  for (int l : d.labels) pos += l;
  CHECK(pos == 500);

  Dataset again = synth::sample_1d(spec, 7);
  CHECK(again.images.values() == d.images.values());
  Dataset other = synth::sample_1d(spec, 8);
  CHECK(other.images.values() != d.images.values());
}

TEST_CASE("vanishing component std collapses samples onto the means") {
  synth::MixtureSpec1D spec{{{0.4, 1e-9, 50}, {0.6, 1e-9, 50}}, 0};
  Dataset d = synth::sample_1d(spec, 3);
  for (std::int64_t i = 0; i < d.size(); ++i) {
    const double x = d.images.data()[i];
    CHECK((std::abs(x - 0.4) < 1e-6 || std::abs(x - 0.6) < 1e-6));
  }
  synth::MixtureSpec1D bad{{{0.4, 0.0, 5}}, 0};
  CHECK_THROWS_AS(synth::sample_1d(bad, 1), std::invalid_argument);
}

TEST_CASE("density estimate normalizes and flattens constant logits") {
  models::Model det = models::init(models::ArchSpec::mlp({1, 1}), 0);
  det.param("layer0_w").values() = {0.0};
  det.param("layer0_b").values() = {3.7};
  const auto grid = synth::uniform_grid(0.0, 1.0, 2048);
  const auto density = synth::estimate_density_1d(det, grid);
  double integral = 0.0;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i)
    integral += 0.5 * (density[i] + density[i + 1]) * (grid[i + 1] - grid[i]);
  CHECK(std::abs(integral - 1.0) <= 1e-9);
  for (double v : density) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("density distance") {
  const auto grid = synth::uniform_grid(0.0, 1.0, 2001);
  SUBCASE("identical densities have zero distance") {
    std::vector<double> p(grid.size(), 1.0);
    CHECK(synth::density_distance(grid, p, p) == 0.0);
  }
  SUBCASE("disjoint supports have distance one") {
    // unit-mass boxes with a gap between them, normalized on this exact grid
    std::vector<double> p(grid.size(), 0.0), q(grid.size(), 0.0);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (grid[i] <= 0.4) p[i] = 1.0;
      if (grid[i] >= 0.6) q[i] = 1.0;
    }
    auto normalize = [&](std::vector<double>& d) {
      double integral = 0.0;
      for (std::size_t i = 0; i + 1 < grid.size(); ++i)
        integral += 0.5 * (d[i] + d[i + 1]) * (grid[i + 1] - grid[i]);
      for (auto& v : d) v /= integral;
    };
    normalize(p);
    normalize(q);
    CHECK(synth::density_distance(grid, p, q) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("grid mismatch errors") {
    std::vector<double> p(grid.size(), 1.0), q(grid.size() - 1, 1.0);
    CHECK_THROWS_AS(synth::density_distance(grid, p, q), std::invalid_argument);
  }
  SUBCASE("uniform vs the two-mode mixture matches the closed-form oracle") {
    const auto spec = synth::MixtureSpec1D::two_modes();
    const auto fine = synth::uniform_grid(0.0, 1.0, 1 << 15);
    std::vector<double> uniform(fine.size(), 1.0), mixture(fine.size());
    for (std::size_t i = 0; i < fine.size(); ++i) mixture[i] = synth::mixture_pdf(spec, fine[i]);
    const double got = synth::density_distance(fine, uniform, mixture);
    const double want = tv_uniform_vs_mixture_oracle(spec);
    CHECK(got == doctest::Approx(want).epsilon(1e-3));
  }
}

TEST_CASE("mixture modes are found on the analytic density") {
  const auto spec = synth::MixtureSpec1D::two_modes();
  const auto grid = synth::uniform_grid(0.0, 1.0, 4096);
  std::vector<double> density(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) density[i] = synth::mixture_pdf(spec, grid[i]);
  const auto modes = synth::density_modes(grid, density);
  REQUIRE(modes.size() >= 2);
  // strongest mode belongs to the tighter component
  CHECK(std::abs(modes[0] - 0.6) < 2e-3);
  CHECK(std::abs(modes[1] - 0.4) < 2e-3);
}

TEST_CASE("2d samples and the untrained field") {
  for (auto kind : {synth::Toy2DKind::Circles, synth::Toy2DKind::Moons, synth::Toy2DKind::GridScatter}) {
    synth::Toy2DSpec spec;
    spec.kind = kind;
    spec.points_per_class = 250;
    spec.seed = 5;
    Dataset d = synth::sample_2d(spec);
    CHECK(d.size() == 500);
    std::int64_t pos = 0;
    for (int l : d.labels) pos += l;
    CHECK(pos == 250);
  }

  models::Model net = models::init(models::ArchSpec::mlp({2, 500, 500, 500, 500, 500, 1}), 11);
  auto field = synth::map_sigmoid_field(net, -2, 2, -2, 2, 32, 32);
  double mean = 0.0;
  for (double v : field.sigmoid) mean += v;
  mean /= static_cast<double>(field.sigmoid.size());
  CHECK(mean > 0.3);
  CHECK(mean < 0.7);
}

TEST_CASE("csv exports") {
  const auto grid = synth::uniform_grid(0.0, 1.0, 4);
  std::vector<double> density{1.0, 2.0, 0.5, 0.5};
  const std::string dpath = "/tmp/advdet_density_test.csv";
  synth::write_density_csv(dpath, grid, density);
  std::FILE* f = std::fopen(dpath.c_str(), "r");
  REQUIRE(f);
  char line[128];
  REQUIRE(std::fgets(line, sizeof(line), f));
  CHECK(std::string(line) == "x,p\n");
  std::fclose(f);
  std::remove(dpath.c_str());

  synth::Field2D field;
  field.nx = field.ny = 2;
  field.x0 = field.y0 = 0;
  field.x1 = field.y1 = 1;
  field.sigmoid = {0.1, 0.2, 0.3, 0.4};
  const std::string fpath = "/tmp/advdet_field_test.csv";
  synth::write_field_csv(fpath, field);
  f = std::fopen(fpath.c_str(), "r");
  REQUIRE(f);
  REQUIRE(std::fgets(line, sizeof(line), f));
  CHECK(std::string(line) == "x,y,sigmoid\n");
  std::fclose(f);
  std::remove(fpath.c_str());
}
