#pragma once

#include <functional>
#include <vector>

#include "advdet/tensor.hpp"

namespace advdet::nn {

// Scalar-valued function of a set of leaf tensors.
using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

// Central-difference verification of reverse-mode gradients at `point`.
// Returns max over sampled coordinates of
//   |analytic - central| / (|analytic| + |central| + 1e-12).
// With max_coords_per_input >= 0, at most that many coordinates per input are
// probed (chosen deterministically from `seed`); otherwise all coordinates.
double finite_difference_check(const ScalarFn& fn, const std::vector<Tensor>& point, double probe,
                               int max_coords_per_input = -1, std::uint64_t seed = 0);

}  // namespace advdet::nn
