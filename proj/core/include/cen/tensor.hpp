// SPDX-License-Identifier: Apache-2.0
//
// Dense tensors with a reverse-mode autodiff graph.
//
// A Tensor is a cheap handle onto shared storage. Operations in ops.hpp
// produce tensors that remember how they were computed; backward() walks
// that graph in reverse topological order and accumulates gradients into
// every leaf that requires them. Leaves created through Tensor::parameter
// require gradients; everything built from constants alone stays detached.
#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cen {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class Tensor;

namespace detail {

template <typename T>
struct TensorImpl;

/// One recorded operation. `backward` reads the gradient of the tensor it
/// produced and accumulates into the gradients of `inputs`.
template <typename T>
struct GraphNode {
  const char* op_kind = "";
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  std::function<void(const TensorImpl<T>& out)> backward;
};

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;  // empty until first accumulation
  bool has_grad = false;
  bool requires_grad = false;
  std::shared_ptr<GraphNode<T>> node;  // null for leaves and constants

  /// Adds `g` into grad, allocating it on first use. No-op for tensors that
  /// do not take part in differentiation.
  void accumulate(std::size_t i, T g);
  T* grad_buffer();
};

}  // namespace detail

template <typename T>
class Tensor {
 public:
  using value_type = T;
  using Impl = detail::TensorImpl<T>;

  Tensor();

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, T value);
  static Tensor from(Shape shape, std::vector<T> values);
  static Tensor scalar(T value);
  /// Trainable leaf: receives gradients during backward().
  static Tensor parameter(Shape shape, std::vector<T> values);

  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const;
  std::size_t numel() const;

  std::span<const T> values() const;
  /// Writable view of the storage. Only meant for leaves (optimizers,
  /// initialisers, checkpoint loading); mutating an interior node does not
  /// invalidate its recorded backward rule.
  std::span<T> mutable_values();

  T item() const;
  T at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;

  bool requires_grad() const;
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const T> grad() const;
  std::span<T> mutable_grad();
  void zero_grad();
  void clear_grad();

  /// Copy of the values with no graph attachment.
  Tensor detach() const;
  Tensor clone() const;

  bool defined() const { return impl_ != nullptr; }
  const std::shared_ptr<Impl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<Impl> impl_;
};

/// Builds an op result. If any input requires gradients the result records
/// `backward` against those inputs; otherwise it is a plain constant.
template <typename T>
Tensor<T> make_result(const char* op_kind, Shape shape, std::vector<T> values,
                      std::vector<Tensor<T>> inputs,
                      std::function<void(const detail::TensorImpl<T>&)> backward);

/// Back-propagates from a scalar. Leaf gradients accumulate across calls;
/// interior gradients are recomputed from scratch each call.
template <typename T>
void backward(const Tensor<T>& loss);

/// Number of nodes reachable from `root` (including leaves).
template <typename T>
std::size_t graph_size(const Tensor<T>& root);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace cen
