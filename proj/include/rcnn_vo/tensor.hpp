// Copyright 2026 The rcnn-vo Authors.
// SPDX-License-Identifier: Apache-2.0

/**
 * @file tensor.hpp
 * @brief Dense row-major float64 tensor with reverse-mode differentiation.
 *
 * A Tensor is a cheap shared handle to a graph node. Operations (see ops.hpp)
 * create new nodes that remember their inputs and a backward closure whenever
 * at least one input requires a gradient and recording is enabled. Calling
 * backward() on a scalar walks the recorded nodes in reverse creation order,
 * accumulates dLoss/dLeaf into every leaf that requires a gradient, and then
 * releases the graph. A graph can be consumed only once.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <new>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace rcnn_vo {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

// 64-byte aligned storage. Eigen's vectorized kernels peel a prefix that depends
// on the buffer address; fixed alignment keeps results identical across runs.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

}  // namespace detail

/// Tensor storage.
using Buffer = std::vector<double, detail::AlignedAllocator<double>>;

namespace detail {

struct Node {
  Shape shape;
  Buffer value;
  Buffer grad;  // empty until first accumulation
  bool requires_grad = false;
  bool is_leaf = true;
  bool consumed = false;
  std::uint64_t order = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads self.grad and accumulates into the inputs that require gradients.
  std::function<void(Node& self)> backward;

  std::span<double> grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

inline std::uint64_t next_order() {
  thread_local std::uint64_t counter = 0;
  return ++counter;
}

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    validate_shape(shape);
    auto node = std::make_shared<detail::Node>();
    node->value.assign(shape_numel(shape), 0.0);
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    node->order = detail::next_order();
    return Tensor(std::move(node));
  }

  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    check_finite(v);
    std::fill(t.node_->value.begin(), t.node_->value.end(), v);
    return t;
  }

  /// Leaf tensor from explicit values; rejects a size mismatch or non-finite entries.
  static Tensor from(Shape shape, const std::vector<double>& values, bool requires_grad = false) {
    return from(std::move(shape), Buffer(values.begin(), values.end()), requires_grad);
  }

  static Tensor from(Shape shape, std::initializer_list<double> values, bool requires_grad = false) {
    return from(std::move(shape), Buffer(values), requires_grad);
  }

  static Tensor from(Shape shape, Buffer values, bool requires_grad = false) {
    validate_shape(shape);
    if (shape_numel(shape) != values.size()) {
      throw std::invalid_argument("Tensor::from: shape " + shape_str(shape) + " needs " +
                                  std::to_string(shape_numel(shape)) + " values, got " +
                                  std::to_string(values.size()));
    }
    for (double v : values) check_finite(v);
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    node->order = detail::next_order();
    return Tensor(std::move(node));
  }

  static Tensor scalar(double v, bool requires_grad = false) { return from({1}, {v}, requires_grad); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node().shape; }
  std::size_t rank() const { return node().shape.size(); }
  std::size_t dim(std::size_t axis) const { return node().shape.at(axis); }
  std::size_t numel() const { return node().value.size(); }

  std::span<const double> data() const { return node().value; }
  double operator[](std::size_t i) const { return node().value[i]; }

  double item() const {
    if (numel() != 1) throw std::invalid_argument("Tensor::item on shape " + shape_str(shape()));
    return node().value[0];
  }

  /// Writable storage. Only leaves may be mutated (parameters, optimizer updates,
  /// finite-difference probes); recorded intermediate values are immutable.
  std::span<double> mutable_data() {
    if (!node().is_leaf) throw std::logic_error("Tensor::mutable_data on a non-leaf tensor");
    return node_->value;
  }

  bool requires_grad() const { return node().requires_grad; }
  bool is_leaf() const { return node().is_leaf; }
  bool has_grad() const { return !node().grad.empty(); }

  /// Accumulated gradient; all zeros when nothing has been accumulated yet.
  std::vector<double> grad_copy() const {
    return has_grad() ? std::vector<double>(node().grad.begin(), node().grad.end()) : std::vector<double>(numel(), 0.0);
  }
  std::span<const double> grad() const { return node().grad; }
  std::span<double> mutable_grad() { return node_->grad_buffer(); }
  /// Zeroes the gradient in place; the buffer is kept for reuse.
  void zero_grad() { std::fill(node().grad.begin(), node().grad.end(), 0.0); }

  /// Deep copy as a fresh leaf with the same requires_grad flag.
  Tensor clone() const {
    auto n = std::make_shared<detail::Node>();
    n->shape = node().shape;
    n->value = node().value;
    n->requires_grad = node().requires_grad;
    n->order = detail::next_order();
    return Tensor(std::move(n));
  }

  /// Same values, cut from any graph, never requiring a gradient.
  Tensor detach() const {
    auto n = std::make_shared<detail::Node>();
    n->shape = node().shape;
    n->value = node().value;
    n->order = detail::next_order();
    return Tensor(std::move(n));
  }

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  // Internal access for op implementations.
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  detail::Node& node() const {
    if (!node_) throw std::logic_error("use of an undefined Tensor");
    return *node_;
  }

  static void validate_shape(const Shape& shape) {
    if (shape.empty()) throw std::invalid_argument("Tensor: rank must be >= 1");
    for (auto e : shape) {
      if (e == 0) throw std::invalid_argument("Tensor: zero extent in shape " + shape_str(shape));
    }
  }

  static void check_finite(double v) {
    if (!std::isfinite(v)) throw std::invalid_argument("Tensor: non-finite value");
  }

  std::shared_ptr<detail::Node> node_;
};

namespace detail {

/// Creates an op result. Inputs and the backward closure are kept only when the
/// result needs a gradient.
inline Tensor make_result(Shape shape, Buffer value,
                          std::vector<std::shared_ptr<Node>> inputs,
                          std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->is_leaf = false;
  node->order = next_order();
  bool needs = false;
  if (grad_mode()) {
    for (const auto& in : inputs) needs = needs || in->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

}  // namespace detail

/// Reverse-mode sweep from a scalar loss. Each leaf that requires a gradient
/// receives dLoss/dLeaf added to its existing gradient buffer. The traversed
/// graph is released afterwards; a second call on it throws.
inline void backward(const Tensor& loss) {
  if (!loss.defined()) throw std::invalid_argument("backward: undefined loss");
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  const auto& root = loss.node_ptr();
  if (root->consumed) throw std::logic_error("backward: graph already consumed");
  if (!root->requires_grad) throw std::invalid_argument("backward: loss is not attached to a recorded graph");

  // Shared handles keep every node alive while inputs are released below.
  std::vector<std::shared_ptr<detail::Node>> nodes;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::shared_ptr<detail::Node>> stack{root};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto n = std::move(stack.back());
    stack.pop_back();
    if (n->consumed) throw std::logic_error("backward: graph already consumed");
    for (const auto& in : n->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in);
    }
    nodes.push_back(std::move(n));
  }
  // Creation order is a topological order: inputs always precede outputs.
  std::sort(nodes.begin(), nodes.end(), [](const auto& a, const auto& b) { return a->order > b->order; });

  root->grad_buffer()[0] += 1.0;
  for (const auto& n : nodes) {
    if (n->is_leaf) continue;
    if (!n->grad.empty() && n->backward) n->backward(*n);
    n->grad.clear();
    n->grad.shrink_to_fit();
    n->backward = nullptr;
    n->inputs.clear();
    n->consumed = true;
  }
}

}  // namespace rcnn_vo
