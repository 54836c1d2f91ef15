#pragma once

// Dense row-major tensors of doubles with tape-based reverse-mode autodiff.
//
// Operations record onto the thread's active Tape (see TapeScope) whenever at
// least one input requires a gradient. Without an active tape they just
// compute values, which is how inference and finite differences run.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace prefiner {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty, or same size as value
  bool requires_grad = false;
  bool is_leaf = true;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);
  static Tensor identity(std::size_t n, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->value.size(); }

  std::span<const double> data() const { return node_->value; }
  /// Mutable view for leaves (parameters, inputs). Writing into a tensor that
  /// is already recorded on a tape invalidates that tape.
  std::span<double> mutable_data() { return node_->value; }
  const std::vector<double>& values() const { return node_->value; }

  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf; }
  /// Turns a leaf into a trainable parameter with a zero gradient.
  void set_requires_grad(bool on);
  void zero_grad();

  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  /// Value copy that is a fresh leaf without gradient tracking.
  Tensor detach() const;
  Tensor clone(bool requires_grad = false) const { return Tensor::from(shape(), values(), requires_grad); }

  const std::shared_ptr<TensorNode>& node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

/// Append-only record of operations. backward() visits records in reverse
/// append order exactly once.
class Tape {
 public:
  using Rule = std::function<void()>;

  void record(std::vector<std::shared_ptr<TensorNode>> inputs, std::shared_ptr<TensorNode> output, Rule rule);
  std::size_t size() const { return records_.size(); }
  void clear() { records_.clear(); }

  /// Populates gradients of every requires_grad leaf reachable from `loss`.
  /// Leaf gradients accumulate across calls; intermediate gradients are reset
  /// at the start of each call. Throws NonScalarLoss.
  void backward(const Tensor& loss);

  static Tape* active();

 private:
  struct Record {
    std::vector<std::shared_ptr<TensorNode>> inputs;
    std::shared_ptr<TensorNode> output;
    Rule rule;
  };
  std::vector<Record> records_;

  friend class TapeScope;
};

/// Makes `tape` the active tape of this thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  /// Suspends recording for the scope's lifetime.
  explicit TapeScope(std::nullptr_t);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

void backward(Tape& tape, const Tensor& loss);

// ---- primitive operations -------------------------------------------------

/// a[..., n, k] x b[k, m] (shared right operand) or a[..., n, k] x b[..., k, m]
/// with identical leading dimensions.
Tensor matmul(const Tensor& a, const Tensor& b);
/// Axis permutation: out.shape[i] = a.shape[perm[i]].
Tensor transpose(const Tensor& a, const std::vector<std::size_t>& perm);
/// Swaps the last two axes.
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t lo, std::size_t hi);
/// Elementwise sum; b may also match a trailing suffix of a's shape and is
/// then broadcast over the leading axes.
Tensor add(const Tensor& a, const Tensor& b);
/// Elementwise product with the same broadcasting rule as add().
Tensor multiply(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
/// Mean over one axis; the axis is removed.
Tensor mean(const Tensor& a, std::size_t axis);
/// Softmax along the last axis.
Tensor rowsoftmax(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);
/// Elementwise a^e.
Tensor pow(const Tensor& a, double e);
/// Elementwise clamp; the gradient is passed through only strictly inside
/// (lo, hi).
Tensor clamp(const Tensor& a, double lo, double hi);

// ---- composites -----------------------------------------------------------

Tensor sub(const Tensor& a, const Tensor& b);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

}  // namespace prefiner
