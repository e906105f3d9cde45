// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "fastpoint/nn/parameters.hpp"

namespace fastpoint::nn {

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// L2 coefficient added to the gradient of kWeight entries only.
  double weight_decay = 1e-4;
};

/// Adaptive-moment descent over every trainable entry of a Parameters set.
/// Entries are addressed by position, so the set must not change shape
/// between steps.
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  long steps() const { return t_; }

  /// Applies one update; entries without a gradient are left untouched.
  /// Entries whose name starts with any of `frozen_prefixes` are skipped.
  void step(Parameters& params, const std::vector<std::string>& frozen_prefixes = {});

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

/// Plain gradient descent: p -= lr * grad.
class Sgd {
 public:
  explicit Sgd(double lr) : lr_(lr) {}
  void step(Parameters& params);

 private:
  double lr_;
};

}  // namespace fastpoint::nn
