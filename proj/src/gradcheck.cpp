#include "advdet/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

#include "advdet/rng.hpp"

namespace advdet::nn {

double finite_difference_check(const ScalarFn& fn, const std::vector<Tensor>& point, double probe,
                               int max_coords_per_input, std::uint64_t seed) {
  if (probe <= 0.0) throw std::invalid_argument("finite_difference_check: probe must be positive");

  // leaves the function will be differentiated against
  std::vector<Tensor> leaves;
  leaves.reserve(point.size());
  for (const auto& p : point) {
    Tensor leaf = p.detached();
    leaf.set_requires_grad(true);
    leaves.push_back(leaf);
  }

  Tensor out = fn(leaves);
  backward(out);

  double worst = 0.0;
  Rng rng(mix_seed(seed, 0x6fd1));
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor& leaf = leaves[li];
    const std::vector<double> analytic = leaf.grad();
    const std::int64_t n = leaf.numel();

    std::vector<std::int64_t> coords;
    if (max_coords_per_input >= 0 && n > max_coords_per_input) {
      coords = rng.sample_indices(n, max_coords_per_input);
    } else {
      coords.resize(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
    }

    for (std::int64_t c : coords) {
      const double saved = leaf.data()[c];
      leaf.data()[c] = saved + probe;
      const double up = fn(leaves).item();
      leaf.data()[c] = saved - probe;
      const double down = fn(leaves).item();
      leaf.data()[c] = saved;
      const double central = (up - down) / (2.0 * probe);
      const double a = analytic[static_cast<std::size_t>(c)];
      const double err = std::abs(a - central) / (std::abs(a) + std::abs(central) + 1e-12);
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace advdet::nn
