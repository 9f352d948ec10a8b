#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "advdet/gradcheck.hpp"
#include "advdet/ops.hpp"
#include "advdet/rng.hpp"
#include "advdet/tensor.hpp"

using namespace advdet;
using nn::Tensor;

namespace {

Tensor random_tensor(nn::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> vals(static_cast<std::size_t>(nn::shape_numel(shape)));
  for (auto& v : vals) v = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(vals));
}

// keep relu/max inputs away from kinks and ties
Tensor random_smooth(nn::Shape shape, Rng& rng) {
  Tensor t = random_tensor(shape, rng);
  for (auto& v : t.values())
    if (std::abs(v) < 0.05) v += v >= 0.0 ? 0.1 : -0.1;
  return t;
}

// weighted-sum wrapper so every output element feeds the scalar
nn::ScalarFn weighted(const std::function<Tensor(const std::vector<Tensor>&)>& op, std::uint64_t seed) {
  return [op, seed](const std::vector<Tensor>& leaves) {
    Tensor out = op(leaves);
    Rng wr(mix_seed(seed, 0x3e1));
    std::vector<double> w(out.values().size());
    for (auto& v : w) v = wr.uniform(0.5, 1.5);
    return nn::sum(nn::mul(out, Tensor::from(out.shape(), std::move(w))));
  };
}

}  // namespace

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), nn::ShapeError);
  Tensor t = Tensor::zeros({3, 2});
  CHECK(t.numel() == 6);
  CHECK(t.grad().size() == 6);  // zero-filled on demand
  for (double g : t.grad()) CHECK(g == 0.0);
}

TEST_CASE("relu forward definition") {
  Tensor x = Tensor::from({3}, {-1.0, 0.0, 2.0});
  Tensor y = nn::relu(x);
  CHECK(y.values() == std::vector<double>{0.0, 0.0, 2.0});
}

TEST_CASE("matmul identity") {
  Rng rng(7);
  Tensor a = random_tensor({3, 3}, rng);
  Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor out = nn::matmul(eye, a);
  for (std::size_t i = 0; i < 9; ++i) CHECK(out.data()[i] == doctest::Approx(a.data()[i]).epsilon(1e-15));
}

TEST_CASE("conv + pool output shape on a 28x28 input") {
  Rng rng(3);
  Tensor x = random_tensor({1, 28, 28, 1}, rng, 0.0, 1.0);
  Tensor w = random_tensor({5, 5, 1, 32}, rng);
  Tensor b = Tensor::zeros({32});
  Tensor y = nn::maxpool2x2(nn::conv2d_same(x, w, b));
  CHECK(y.shape() == nn::Shape{1, 14, 14, 32});
}

TEST_CASE("shape errors name the primitive") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 2});
  try {
    nn::matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const nn::ShapeError& e) {
    CHECK(e.primitive() == "matmul");
    CHECK(std::string(e.what()).find("[2,3]") != std::string::npos);
  }
}

TEST_CASE("backward analytic spot checks") {
  SUBCASE("d/dx x^2 at 3 is 6") {
    Tensor x = Tensor::from({1}, {3.0}, true);
    nn::backward(nn::sumsq(x));
    CHECK(x.grad()[0] == doctest::Approx(6.0));
  }
  SUBCASE("d/dx sigmoid at 0 is 0.25") {
    Tensor x = Tensor::from({1}, {0.0}, true);
    nn::backward(nn::sum(nn::sigmoid(x)));
    CHECK(x.grad()[0] == doctest::Approx(0.25));
  }
  SUBCASE("bce-with-logit gradient at logit 0, label 1 is -0.5") {
    Tensor z = Tensor::from({1}, {0.0}, true);
    nn::backward(nn::sum(nn::bce_with_logits(z, {1.0})));
    CHECK(z.grad()[0] == doctest::Approx(-0.5));
  }
  SUBCASE("relu gradient at the kink is 0") {
    Tensor x = Tensor::from({2}, {0.0, 1.0}, true);
    nn::backward(nn::sum(nn::relu(x)));
    CHECK(x.grad()[0] == 0.0);
    CHECK(x.grad()[1] == 1.0);
  }
}

TEST_CASE("bce-with-logits stays finite for huge logits") {
  Tensor z = Tensor::from({2}, {1000.0, -1000.0}, true);
  Tensor loss = nn::bce_with_logits(z, {0.0, 1.0});
  CHECK(loss.data()[0] == doctest::Approx(1000.0));
  CHECK(loss.data()[1] == doctest::Approx(1000.0));
  nn::backward(nn::sum(loss));
  CHECK(std::isfinite(z.grad()[0]));
  CHECK(std::isfinite(z.grad()[1]));
}

TEST_CASE("backward requires a scalar output") {
  Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
  CHECK_THROWS_AS(nn::backward(nn::relu(x)), nn::ShapeError);
}

TEST_CASE("leaves off the path get zero gradients") {
  Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
  Tensor unused = Tensor::from({2}, {5.0, 6.0}, true);
  nn::backward(nn::sum(nn::mul(x, x)));
  CHECK(unused.grad() == std::vector<double>{0.0, 0.0});
}

TEST_CASE("backward is linear in the output") {
  Rng rng(11);
  Tensor base = random_smooth({4}, rng);
  const double a = 2.5, b = -1.25;

  auto grad_of = [&](auto&& fn) {
    Tensor x = base.detached();
    x.set_requires_grad(true);
    nn::backward(fn(x));
    return x.grad();
  };
  auto f = [](const Tensor& x) { return nn::sumsq(x); };
  auto g = [](const Tensor& x) { return nn::sum(nn::sigmoid(x)); };
  auto combo = [&](const Tensor& x) { return nn::add(nn::scale(f(x), a), nn::scale(g(x), b)); };

  const auto gf = grad_of(f), gg = grad_of(g), gc = grad_of(combo);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(gc[i] == doctest::Approx(a * gf[i] + b * gg[i]).epsilon(1e-12));
}

TEST_CASE("forward is deterministic") {
  Rng rng(5);
  Tensor x = random_tensor({2, 6, 6, 2}, rng, 0.0, 1.0);
  Tensor w = random_tensor({3, 3, 2, 4}, rng);
  Tensor b = random_tensor({4}, rng);
  Tensor y1 = nn::maxpool2x2(nn::conv2d_same(x, w, b));
  Tensor y2 = nn::maxpool2x2(nn::conv2d_same(x, w, b));
  CHECK(y1.values() == y2.values());
}

TEST_CASE("maxpool ties route gradient to the first element in scan order") {
  // window of all-equal values
  Tensor x = Tensor::from({1, 2, 2, 1}, {0.5, 0.5, 0.5, 0.5}, true);
  nn::backward(nn::sum(nn::maxpool2x2(x)));
  CHECK(x.grad() == std::vector<double>{1.0, 0.0, 0.0, 0.0});
}

TEST_CASE("finite difference oracle behaviors") {
  SUBCASE("quadratic form is matched to 1e-6 with probe 1e-4") {
    Rng rng(21);
    Tensor x = random_tensor({6}, rng);
    const double err = nn::finite_difference_check(
        [](const std::vector<Tensor>& v) { return nn::sumsq(v[0]); }, {x}, 1e-4);
    CHECK(err < 1e-6);
  }
  SUBCASE("relu away from the kink") {
    Rng rng(22);
    Tensor x = random_tensor({8}, rng, 0.1, 1.0);
    const double err = nn::finite_difference_check(
        [](const std::vector<Tensor>& v) { return nn::sum(nn::relu(v[0])); }, {x}, 1e-5);
    CHECK(err < 1e-4);
  }
  SUBCASE("constant function has zero error") {
    Tensor x = Tensor::from({3}, {1.0, 2.0, 3.0});
    const double err = nn::finite_difference_check(
        [](const std::vector<Tensor>& v) {
          (void)v;
          return Tensor::scalar(4.0);
        },
        {x}, 1e-4);
    CHECK(err == 0.0);
  }
}

TEST_CASE("gradcheck across primitives at random smooth points") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(mix_seed(seed, 0x90));
    CAPTURE(seed);

    {
      Tensor a = random_smooth({3, 4}, rng), b = random_smooth({3, 4}, rng);
      auto two = [&](auto op) {
        return nn::finite_difference_check(
            weighted([op](const std::vector<Tensor>& v) { return op(v[0], v[1]); }, seed), {a, b}, 1e-5);
      };
      CHECK(two([](const Tensor& x, const Tensor& y) { return nn::add(x, y); }) < 1e-4);
      CHECK(two([](const Tensor& x, const Tensor& y) { return nn::sub(x, y); }) < 1e-4);
      CHECK(two([](const Tensor& x, const Tensor& y) { return nn::mul(x, y); }) < 1e-4);
      CHECK(two([](const Tensor& x, const Tensor& y) { return nn::maximum(x, y); }) < 1e-4);
    }
    {
      Tensor x = random_smooth({4, 3}, rng), w = random_smooth({3, 5}, rng), b = random_smooth({5}, rng);
      CHECK(nn::finite_difference_check(
                weighted([](const std::vector<Tensor>& v) { return nn::affine(v[0], v[1], v[2]); }, seed),
                {x, w, b}, 1e-5) < 1e-4);
      CHECK(nn::finite_difference_check(
                weighted([](const std::vector<Tensor>& v) { return nn::matmul(v[0], v[1]); }, seed), {x, w},
                1e-5) < 1e-4);
    }
    {
      Tensor x = random_smooth({2, 4, 4, 2}, rng), w = random_smooth({3, 3, 2, 3}, rng), b = random_smooth({3}, rng);
      CHECK(nn::finite_difference_check(
                weighted([](const std::vector<Tensor>& v) { return nn::conv2d_same(v[0], v[1], v[2]); }, seed),
                {x, w, b}, 1e-5) < 1e-4);
      CHECK(nn::finite_difference_check(
                weighted([](const std::vector<Tensor>& v) { return nn::maxpool2x2(v[0]); }, seed), {x}, 1e-6) < 1e-4);
    }
    {
      Tensor x = random_smooth({6}, rng);
      CHECK(nn::finite_difference_check(
                weighted([](const std::vector<Tensor>& v) { return nn::relu(v[0]); }, seed), {x}, 1e-6) < 1e-4);
      CHECK(nn::finite_difference_check(
                weighted([](const std::vector<Tensor>& v) { return nn::sigmoid(v[0]); }, seed), {x}, 1e-5) < 1e-4);
      CHECK(nn::finite_difference_check(
                [](const std::vector<Tensor>& v) { return nn::mean(v[0]); }, {x}, 1e-5) < 1e-4);
      CHECK(nn::finite_difference_check(
                [](const std::vector<Tensor>& v) { return nn::max_all(v[0]); }, {x}, 1e-6) < 1e-4);
      CHECK(nn::finite_difference_check(
                [](const std::vector<Tensor>& v) { return nn::sumsq(v[0]); }, {x}, 1e-5) < 1e-4);
    }
    {
      Tensor z = random_smooth({5}, rng);
      std::vector<double> targets(5);
      for (auto& t : targets) t = rng.below(2) ? 1.0 : 0.0;
      CHECK(nn::finite_difference_check(
                weighted([targets](const std::vector<Tensor>& v) { return nn::bce_with_logits(v[0], targets); },
                         seed),
                {z}, 1e-5) < 1e-4);
    }
    {
      Tensor z = random_smooth({4, 3}, rng);
      std::vector<int> labels(4);
      for (auto& l : labels) l = static_cast<int>(rng.below(3));
      CHECK(nn::finite_difference_check(
                weighted([labels](const std::vector<Tensor>& v) { return nn::softmax_xent(v[0], labels); }, seed),
                {z}, 1e-5) < 1e-4);
      CHECK(nn::finite_difference_check(
                weighted([labels](const std::vector<Tensor>& v) { return nn::row_max_excluding(v[0], labels); },
                         seed),
                {z}, 1e-6) < 1e-4);
      CHECK(nn::finite_difference_check(
                weighted([labels](const std::vector<Tensor>& v) { return nn::gather_col(v[0], labels); }, seed),
                {z}, 1e-5) < 1e-4);
      CHECK(nn::finite_difference_check(
                weighted([](const std::vector<Tensor>& v) { return nn::row_max(v[0]); }, seed), {z}, 1e-6) < 1e-4);
      CHECK(nn::finite_difference_check(
                weighted([](const std::vector<Tensor>& v) { return nn::row_sumsq(v[0]); }, seed), {z}, 1e-5) < 1e-4);
    }
    {
      Tensor a = random_smooth({4}, rng), c = random_smooth({4}, rng);
      std::vector<std::uint8_t> mask(4);
      for (auto& m : mask) m = static_cast<std::uint8_t>(rng.below(2));
      CHECK(nn::finite_difference_check(
                weighted([mask](const std::vector<Tensor>& v) { return nn::select(mask, v[0], v[1]); }, seed),
                {a, c}, 1e-5) < 1e-4);
      CHECK(nn::finite_difference_check(
                weighted([](const std::vector<Tensor>& v) { return nn::concat_cols({v[0], v[1]}); }, seed), {a, c},
                1e-5) < 1e-4);
    }
  }
}
