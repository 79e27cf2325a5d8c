// SPDX-License-Identifier: Apache-2.0
#include "cen/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "cen/error.hpp"

namespace cen {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

template <typename T>
T* TensorImpl<T>::grad_buffer() {
  if (!has_grad) {
    grad.assign(values.size(), T(0));
    has_grad = true;
  }
  return grad.data();
}

template <typename T>
void TensorImpl<T>::accumulate(std::size_t i, T g) {
  if (!requires_grad) return;
  grad_buffer()[i] += g;
}

template struct TensorImpl<float>;
template struct TensorImpl<double>;

}  // namespace detail

template <typename T>
Tensor<T>::Tensor() = default;

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
  return full(std::move(shape), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  auto impl = std::make_shared<Impl>();
  impl->values.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  return Tensor(std::move(impl));
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " elements, got " +
                         std::to_string(values.size()));
  }
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  return Tensor(std::move(impl));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
  return from({1}, {value});
}

template <typename T>
Tensor<T> Tensor<T>::parameter(Shape shape, std::vector<T> values) {
  Tensor t = from(std::move(shape), std::move(values));
  t.impl_->requires_grad = true;
  return t;
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  return impl_->shape;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(impl_->shape));
  }
  return impl_->shape[axis];
}

template <typename T>
std::size_t Tensor<T>::rank() const {
  return impl_->shape.size();
}

template <typename T>
std::size_t Tensor<T>::numel() const {
  return impl_->values.size();
}

template <typename T>
std::span<const T> Tensor<T>::values() const {
  return impl_->values;
}

template <typename T>
std::span<T> Tensor<T>::mutable_values() {
  return impl_->values;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw ContractError("item() on tensor of shape " + shape_str(shape()));
  }
  return impl_->values[0];
}

template <typename T>
T Tensor<T>::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
  const auto& s = impl_->shape;
  return impl_->values[((n * s[1] + c) * s[2] + h) * s[3] + w];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return impl_->requires_grad;
}

template <typename T>
bool Tensor<T>::is_leaf() const {
  return impl_->node == nullptr;
}

template <typename T>
bool Tensor<T>::has_grad() const {
  return impl_->has_grad;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  if (!impl_->has_grad) return {};
  return impl_->grad;
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
  return {impl_->grad_buffer(), impl_->values.size()};
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (impl_->has_grad) std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <typename T>
void Tensor<T>::clear_grad() {
  impl_->grad.clear();
  impl_->has_grad = false;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from(impl_->shape, impl_->values);
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  Tensor t = detach();
  t.impl_->requires_grad = impl_->requires_grad && is_leaf();
  return t;
}

template <typename T>
Tensor<T> make_result(const char* op_kind, Shape shape, std::vector<T> values,
                      std::vector<Tensor<T>> inputs,
                      std::function<void(const detail::TensorImpl<T>&)> backward) {
  Tensor<T> out = Tensor<T>::from(std::move(shape), std::move(values));
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor<T>& t) { return t.requires_grad(); });
  if (!needs) return out;
  auto node = std::make_shared<detail::GraphNode<T>>();
  node->op_kind = op_kind;
  node->inputs.reserve(inputs.size());
  for (auto& in : inputs) node->inputs.push_back(in.impl());
  node->backward = std::move(backward);
  out.impl()->node = std::move(node);
  out.impl()->requires_grad = true;
  return out;
}

namespace {

template <typename T>
std::vector<detail::TensorImpl<T>*> topo_order(detail::TensorImpl<T>* root) {
  // Iterative post-order DFS; parents appear before children in the result.
  std::vector<detail::TensorImpl<T>*> order;
  std::unordered_set<detail::TensorImpl<T>*> seen;
  std::vector<std::pair<detail::TensorImpl<T>*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    const std::size_t n_inputs = impl->node ? impl->node->inputs.size() : 0;
    if (next < n_inputs) {
      auto* child = impl->node->inputs[next++].get();
      if (seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(impl);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward() on a loss that is not attached to any parameter");
  }
  auto order = topo_order(loss.impl().get());
  for (auto* impl : order) {
    if (impl->node) {
      impl->grad.assign(impl->values.size(), T(0));
      impl->has_grad = true;
    }
  }
  if (loss.is_leaf()) {
    loss.impl()->accumulate(0, T(1));
    return;
  }
  loss.impl()->grad[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* impl = *it;
    if (impl->node && impl->node->backward) impl->node->backward(*impl);
  }
}

template <typename T>
std::size_t graph_size(const Tensor<T>& root) {
  return topo_order(root.impl().get()).size();
}

template class Tensor<float>;
template class Tensor<double>;

template Tensor<float> make_result<float>(const char*, Shape, std::vector<float>,
                                          std::vector<Tensor<float>>,
                                          std::function<void(const detail::TensorImpl<float>&)>);
template Tensor<double> make_result<double>(const char*, Shape, std::vector<double>,
                                            std::vector<Tensor<double>>,
                                            std::function<void(const detail::TensorImpl<double>&)>);
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);
template std::size_t graph_size<float>(const Tensor<float>&);
template std::size_t graph_size<double>(const Tensor<double>&);

}  // namespace cen
