#include "advdet/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace advdet::models {

void Adam::step(Model& m) {
  if (m_.empty()) {
    m_.resize(m.params.size());
    v_.resize(m.params.size());
    for (std::size_t i = 0; i < m.params.size(); ++i) {
      m_[i].assign(m.params[i].second.values().size(), 0.0);
      v_[i].assign(m.params[i].second.values().size(), 0.0);
    }
  }
  if (m_.size() != m.params.size()) throw std::runtime_error("Adam: parameter list changed");

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    auto& p = m.params[i].second;
    if (!p.grad_active()) continue;
    double* w = p.data();
    const double* g = p.grad().data();
    auto& mi = m_[i];
    auto& vi = v_[i];
    for (std::size_t j = 0; j < p.values().size(); ++j) {
      mi[j] = cfg_.beta1 * mi[j] + (1.0 - cfg_.beta1) * g[j];
      vi[j] = cfg_.beta2 * vi[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      w[j] -= cfg_.lr * (mi[j] / bc1) / (std::sqrt(vi[j] / bc2) + cfg_.eps);
    }
    p.zero_grad();
  }
}

}  // namespace advdet::models
