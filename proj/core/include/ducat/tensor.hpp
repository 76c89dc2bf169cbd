#pragma once

/// @file tensor.hpp
/// Dense float64 arrays with tape-free reverse-mode differentiation.
///
/// A Tensor is a cheap shared handle onto a graph node. Ops build new nodes
/// that remember their parents and a closure propagating the node's gradient
/// into them; backward() walks the graph once in reverse topological order.
///
/// Broadcasting is deliberately limited: binary elementwise ops accept two
/// tensors of identical shape, or one operand holding a single element. The
/// bias add of a dense layer is its own op (linear) instead of a broadcast.
///
/// relu'(0) is taken to be 0.

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <vector>

namespace ducat {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape) noexcept;

namespace detail {
struct Node;
struct Access;
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }

  const Shape& shape() const;
  std::size_t numel() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rows() const { return dim(0); }
  std::size_t cols() const { return dim(1); }

  std::span<const double> data() const;
  /// Only leaves may be written in place; mutating an interior node would
  /// silently invalidate the gradients recorded against it.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  /// Deep copy of the values as a new leaf, cut from any graph.
  Tensor detached(bool requires_grad = false) const;

  /// True when both handles refer to the same node.
  bool same_node(const Tensor& other) const noexcept { return node_ == other.node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend struct detail::Access;
};

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
/// x·Wᵀ + b with x [B×in], W [out×in], b [out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// Columns [begin, end) of a 2-D tensor.
Tensor slice_columns(const Tensor& x, std::size_t begin, std::size_t end);

// Elementwise.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);

// Reductions to a scalar.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// Row-wise softmax over the last axis, computed with max subtraction.
Tensor softmax(const Tensor& logits);
Tensor log_softmax(const Tensor& logits);

/// Mean over rows of −Σ_k target_k · log softmax(logits)_k. Each target row
/// must be a probability vector (non-negative, summing to 1 within 1e-9).
Tensor cross_entropy(const Tensor& logits, const Tensor& target);

/// Per-row cross entropy values, no graph recorded.
std::vector<double> cross_entropy_rows(const Tensor& logits, const Tensor& target);

/// Populates grad on every requires_grad leaf reachable from a single-element
/// loss. Leaf gradients accumulate across calls until zero_grad().
void backward(const Tensor& loss);

}  // namespace ducat
