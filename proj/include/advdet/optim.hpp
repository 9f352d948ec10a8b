#pragma once

#include <vector>

#include "advdet/model.hpp"

namespace advdet::models {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam over a model's parameter list. step() consumes and clears the
// accumulated parameter gradients.
class Adam {
 public:
  explicit Adam(const AdamConfig& cfg) : cfg_(cfg) {}

  void step(Model& m);

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace advdet::models
