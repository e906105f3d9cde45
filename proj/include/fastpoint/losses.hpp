// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

/// \file
/// Proposal-network and refinement losses. Each loss has a plain form that
/// returns the value and, optionally, its analytic gradient, plus a Tensor
/// form that records into the autodiff graph.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fastpoint/anchors.hpp"
#include "fastpoint/nn/tensor.hpp"

namespace fastpoint {

struct LossConfig {
  double gamma = 10.0;        ///< weight of the negative classification term
  double sigma = 3.0;         ///< smooth-L1 transition, at |x| = 1 / sigma^2
  std::size_t ohem_keep = 512;
  double eps = 1e-7;          ///< probability clamp

  /// Throws ConfigMismatch when a field is out of range.
  void validate() const;
};

/// Binary cross-entropy on p clamped to [eps, 1 - eps].
double bce(double p, int t, double eps = 1e-7);
/// d bce / dp; zero where the clamp is active.
double bce_grad(double p, int t, double eps = 1e-7);

struct ClsLoss {
  double value = 0.0;
  double positive_term = 0.0;
  double negative_term = 0.0;
  /// Indices into the negative list that survived hard-negative mining,
  /// hardest first.
  std::vector<std::size_t> kept_negatives;
  std::vector<double> grad_pos;  ///< d value / d pos_probs[i]
  std::vector<double> grad_neg;  ///< d value / d neg_probs[i]
};

/// (1/N_pos) sum bce(p_pos, 1) + (gamma/N_keep) sum_kept bce(p_neg, 0), where
/// the kept negatives are the ohem_keep largest-loss ones (lower index wins
/// ties) and N_keep = min(ohem_keep, N_neg). Empty lists contribute zero.
ClsLoss cls_loss(std::span<const double> pos_probs, std::span<const double> neg_probs,
                 const LossConfig& cfg);

double smooth_l1(double x, double sigma);
double smooth_l1_grad(double x, double sigma);

/// Mean over positives of the summed smooth-L1 over the 7 components.
/// `grad`, when non-null, is resized to pred.size() and filled.
double reg_loss_rpn(std::span<const RpnDelta> pred, std::span<const RpnDelta> target, double sigma,
                    std::vector<RpnDelta>* grad = nullptr);

/// Mean smooth-L1 over the 24 corner components of one proposal.
double corner_loss(const CornerTarget& pred, const CornerTarget& target, double sigma,
                   CornerTarget* grad = nullptr);

/// Tensor forms. `probs` is any tensor of per-anchor probabilities in flat
/// anchor order.
nn::Tensor cls_loss_op(const nn::Tensor& probs, std::span<const std::size_t> positives,
                       std::span<const std::size_t> negatives, const LossConfig& cfg);

/// `reg` holds 7 residuals per anchor in flat anchor order.
nn::Tensor reg_loss_op(const nn::Tensor& reg, std::span<const std::size_t> positives,
                       std::span<const RpnDelta> targets, double sigma);

/// `pred` is (P, 24); the loss is the mean of corner_loss over the P rows.
nn::Tensor corner_loss_op(const nn::Tensor& pred, std::span<const CornerTarget> targets,
                          double sigma);

}  // namespace fastpoint
