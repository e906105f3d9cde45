// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

/// \file
/// Dense row-major tensor of doubles with an optional tape for reverse-mode
/// differentiation.
///
/// Tensors are handles: copying a Tensor shares its storage and graph node.
/// Operations record a backward closure only when grad mode is on and at
/// least one input requires a gradient.

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fastpoint::nn {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  ///< empty until first needed
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  /// Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node& self)> backward_fn;

  std::vector<double>& ensure_grad();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  /// Leaf that accumulates gradients.
  static Tensor parameter(Shape shape, std::vector<double> values);
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const { return shape().at(axis); }
  std::size_t numel() const;

  std::span<const double> values() const;
  std::span<double> values_mut();
  /// Empty span when no gradient has been accumulated yet.
  std::span<const double> grad() const;
  std::span<double> grad_mut();

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool is_leaf() const;

  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  void zero_grad();

  /// Copy of the values with no graph attached.
  Tensor detach() const;

  const std::shared_ptr<Node>& node() const { return node_; }

  /// Used by operations to create recorded results.
  static Tensor from_node(std::shared_ptr<Node> node);

 private:
  std::shared_ptr<Node> node_;
};

/// Reverse-mode accumulation from a scalar. Gradients of leaves accumulate
/// across calls; intermediate gradients are recomputed each call.
void backward(const Tensor& loss);

bool grad_enabled();

/// Disables graph recording for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Creates an op result. `backward` is attached only if some parent needs it.
Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                   std::function<void(Node& self)> backward);

}  // namespace fastpoint::nn
