#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace advdet::nn {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Thrown by primitives on malformed inputs; carries the primitive name so
// callers can tell which node of a composite graph rejected its operands.
class ShapeError : public std::runtime_error {
 public:
  ShapeError(std::string primitive, const std::string& detail)
      : std::runtime_error(primitive + ": " + detail), primitive_(std::move(primitive)) {}
  const std::string& primitive() const { return primitive_; }

 private:
  std::string primitive_;
};

class Tensor;

// One recorded primitive application. The chain of nodes reachable from an
// output tensor is the computation record; parents precede their consumers
// by construction, and `backward` accumulates into the parents' grad buffers.
struct Node {
  const char* op = "";
  std::vector<Tensor> parents;
  std::function<void(const Tensor& out)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until touched; values.size() once active
  std::shared_ptr<Node> node;
};

// Dense row-major double tensor with a shared implementation. Copying a
// Tensor copies the handle, not the buffer.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return impl != nullptr; }
  const Shape& shape() const { return impl->shape; }
  std::int64_t dim(std::size_t i) const { return impl->shape[i]; }
  std::size_t ndim() const { return impl->shape.size(); }
  std::int64_t numel() const { return static_cast<std::int64_t>(impl->values.size()); }

  double* data() { return impl->values.data(); }
  const double* data() const { return impl->values.data(); }
  std::vector<double>& values() { return impl->values; }
  const std::vector<double>& values() const { return impl->values; }

  bool requires_grad() const { return impl->requires_grad; }
  void set_requires_grad(bool rg) { impl->requires_grad = rg; }

  // Gradient buffer, zero-filled on first access.
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  bool grad_active() const { return !impl->grad.empty(); }
  void zero_grad();

  double item() const;

  // Value copy with no tape attachment.
  Tensor detached() const;

  std::shared_ptr<TensorImpl> impl;
};

// Reverse-mode sweep from a scalar output. Seeds d(out)/d(out) = 1, walks the
// record in reverse topological order, and leaves gradients on every
// requires_grad leaf that the output depends on. Throws on non-scalar output.
void backward(const Tensor& output);

}  // namespace advdet::nn
