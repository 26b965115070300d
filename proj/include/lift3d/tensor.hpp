#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace lift3d {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

enum class Mode { kTrain, kEval };

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // allocated lazily during backward
  bool requires_grad = false;
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};

std::shared_ptr<Node> make_node(Shape shape, std::vector<double> values, bool requires_grad);

}  // namespace detail

// Dense double tensor participating in reverse-mode differentiation.
// A Tensor is a cheap handle onto a graph node; ops build the graph as they
// run and backward() replays it in reverse recording order. Graphs are
// intended to live for one forward/backward pass.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor leaf(Shape shape, std::vector<double> values, bool requires_grad);
  static Tensor scalar(double value);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->values.size(); }
  std::size_t ndim() const { return node_->shape.size(); }

  const std::vector<double>& values() const { return node_->values; }
  std::vector<double>& mutable_values() { return node_->values; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() == node_->values.size(); }
  const std::vector<double>& grad() const { return node_->grad; }
  std::vector<double>& mutable_grad() { return node_->grad; }
  void zero_grad() { node_->grad.assign(node_->values.size(), 0.0); }

  double item() const;

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Elementwise binary ops with NumPy-style right-aligned broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// Elementwise unary ops.
Tensor neg(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor clamp_min(const Tensor& x, double floor);  // max(x, floor)
Tensor add_scalar(const Tensor& x, double s);
Tensor mul_scalar(const Tensor& x, double s);

// (m,k)@(k,n), (B,m,k)@(B,k,n) or (B,m,k)@(k,n).
Tensor matmul(const Tensor& a, const Tensor& b);

// Structural ops.
Tensor transpose_last(const Tensor& x);  // swap the last two axes
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len);
Tensor mean_axis(const Tensor& x, std::size_t axis, bool keepdim = false);
Tensor sum_axis(const Tensor& x, std::size_t axis, bool keepdim = false);
Tensor sum_all(const Tensor& x);
Tensor gather_axis(const Tensor& x, std::size_t axis, const std::vector<std::size_t>& indices);

// Same values, no gradient flow.
Tensor detach(const Tensor& x);

// Singular values of a 2D tensor, descending. Backward assumes the consumer
// is a symmetric function of the singular values (dE = U diag(dL/dsigma) V^T,
// singular-vector sensitivity omitted).
Tensor singular_values(const Tensor& x);

// Batch normalization over the trailing feature axis of a (..., F) tensor,
// with every leading axis treated as batch. Train mode uses batch statistics
// and updates the running buffers in place (momentum * batch stat); eval mode
// normalizes with the running buffers.
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 Tensor& running_mean, Tensor& running_var, double momentum,
                 double eps, Mode mode);

// Reverse accumulation from a scalar loss into every requires-grad leaf.
void backward(const Tensor& loss);

// Raises glibc's malloc mmap/trim thresholds so the ~1 MiB tensor buffers a
// training step churns through are recycled inside the heap arena instead of
// being mmapped and returned to the kernel each time (roughly a 3x step-time
// difference). No-op elsewhere; call once at process start.
void tune_allocator();

// Disables gradient recording on this thread for its lifetime: ops produce
// plain values with no parents or backward closures. Used for evaluation,
// where retaining the graph would only cost memory.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace lift3d
