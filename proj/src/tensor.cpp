#include "advdet/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace advdet::nn {

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) {
    if (d < 0) throw ShapeError("tensor", "negative dimension " + std::to_string(d));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  Tensor t;
  t.impl = std::make_shared<TensorImpl>();
  const auto n = shape_numel(shape);
  t.impl->shape = std::move(shape);
  t.impl->values.assign(static_cast<std::size_t>(n), 0.0);
  t.impl->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  const auto n = shape_numel(shape);
  if (n != static_cast<std::int64_t>(values.size()))
    throw ShapeError("tensor", "shape " + shape_str(shape) + " expects " + std::to_string(n) +
                                   " values, got " + std::to_string(values.size()));
  Tensor t;
  t.impl = std::make_shared<TensorImpl>();
  t.impl->shape = std::move(shape);
  t.impl->values = std::move(values);
  t.impl->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from({}, {v}, requires_grad); }

std::vector<double>& Tensor::grad() {
  if (impl->grad.empty()) impl->grad.assign(impl->values.size(), 0.0);
  return impl->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (impl->grad.empty()) impl->grad.assign(impl->values.size(), 0.0);
  return impl->grad;
}

void Tensor::zero_grad() {
  if (!impl->grad.empty()) std::fill(impl->grad.begin(), impl->grad.end(), 0.0);
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item", "tensor has " + std::to_string(numel()) + " elements");
  return impl->values[0];
}

Tensor Tensor::detached() const {
  Tensor t;
  t.impl = std::make_shared<TensorImpl>();
  t.impl->shape = impl->shape;
  t.impl->values = impl->values;
  t.impl->requires_grad = false;
  return t;
}

void backward(const Tensor& output) {
  if (!output.defined()) throw ShapeError("backward", "undefined output");
  if (output.numel() != 1) throw ShapeError("backward", "output must be scalar, shape is " + shape_str(output.shape()));

  // post-order DFS over the record; parents end up before consumers
  std::vector<Tensor> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<Tensor, std::size_t>> stack;
  stack.emplace_back(output, 0);
  seen.insert(output.impl.get());
  while (!stack.empty()) {
    auto& [t, next] = stack.back();
    if (t.impl->node && next < t.impl->node->parents.size()) {
      const Tensor& p = t.impl->node->parents[next];
      ++next;
      if (p.defined() && !seen.count(p.impl.get())) {
        seen.insert(p.impl.get());
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(t);
      stack.pop_back();
    }
  }

  output.impl->grad.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Tensor& t = *it;
    if (!t.impl->node || !t.impl->node->backward) continue;
    if (t.impl->grad.empty()) continue;  // no gradient flowed here
    t.impl->node->backward(t);
  }
}

}  // namespace advdet::nn
