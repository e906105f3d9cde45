// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastpoint/losses.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "fastpoint/error.hpp"

namespace fastpoint {

void LossConfig::validate() const {
  if (!(gamma > 0.0)) throw ConfigMismatch("gamma must be positive");
  if (!(sigma > 0.0)) throw ConfigMismatch("sigma must be positive");
  if (ohem_keep < 1) throw ConfigMismatch("ohem_keep must be >= 1");
  if (!(eps > 0.0 && eps < 0.5)) throw ConfigMismatch("eps must lie in (0, 0.5)");
}

double bce(double p, int t, double eps) {
  const double q = std::clamp(p, eps, 1.0 - eps);
  return t ? -std::log(q) : -std::log(1.0 - q);
}

double bce_grad(double p, int t, double eps) {
  if (p < eps || p > 1.0 - eps) return 0.0;
  return t ? -1.0 / p : 1.0 / (1.0 - p);
}

ClsLoss cls_loss(std::span<const double> pos_probs, std::span<const double> neg_probs,
                 const LossConfig& cfg) {
  ClsLoss out;
  out.grad_pos.assign(pos_probs.size(), 0.0);
  out.grad_neg.assign(neg_probs.size(), 0.0);
  if (!pos_probs.empty()) {
    const double inv = 1.0 / static_cast<double>(pos_probs.size());
    for (std::size_t i = 0; i < pos_probs.size(); ++i) {
      out.positive_term += bce(pos_probs[i], 1, cfg.eps);
      out.grad_pos[i] = inv * bce_grad(pos_probs[i], 1, cfg.eps);
    }
    out.positive_term *= inv;
  }
  if (!neg_probs.empty()) {
    std::vector<double> losses(neg_probs.size());
    for (std::size_t i = 0; i < neg_probs.size(); ++i) losses[i] = bce(neg_probs[i], 0, cfg.eps);
    std::vector<std::size_t> order(neg_probs.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t keep = std::min(cfg.ohem_keep, order.size());
    auto harder = [&losses](std::size_t a, std::size_t b) {
      return losses[a] != losses[b] ? losses[a] > losses[b] : a < b;
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                      harder);
    order.resize(keep);
    const double w = cfg.gamma / static_cast<double>(keep);
    for (std::size_t i : order) {
      out.negative_term += losses[i];
      out.grad_neg[i] = w * bce_grad(neg_probs[i], 0, cfg.eps);
    }
    out.negative_term *= w;
    out.kept_negatives = std::move(order);
  }
  out.value = out.positive_term + out.negative_term;
  return out;
}

double smooth_l1(double x, double sigma) {
  const double s2 = sigma * sigma;
  const double ax = std::abs(x);
  return ax < 1.0 / s2 ? 0.5 * s2 * x * x : ax - 0.5 / s2;
}

double smooth_l1_grad(double x, double sigma) {
  const double s2 = sigma * sigma;
  if (std::abs(x) < 1.0 / s2) return s2 * x;
  return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
}

double reg_loss_rpn(std::span<const RpnDelta> pred, std::span<const RpnDelta> target, double sigma,
                    std::vector<RpnDelta>* grad) {
  if (pred.size() != target.size()) {
    throw ShapeMismatch("reg_loss_rpn: " + std::to_string(pred.size()) + " predictions vs " +
                        std::to_string(target.size()) + " targets");
  }
  if (grad) grad->assign(pred.size(), RpnDelta{});
  if (pred.empty()) return 0.0;
  const double inv = 1.0 / static_cast<double>(pred.size());
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t k = 0; k < 7; ++k) {
      const double d = pred[i][k] - target[i][k];
      total += smooth_l1(d, sigma);
      if (grad) (*grad)[i][k] = inv * smooth_l1_grad(d, sigma);
    }
  }
  return total * inv;
}

double corner_loss(const CornerTarget& pred, const CornerTarget& target, double sigma,
                   CornerTarget* grad) {
  double total = 0.0;
  for (std::size_t k = 0; k < 24; ++k) {
    const double d = pred[k] - target[k];
    total += smooth_l1(d, sigma);
    if (grad) (*grad)[k] = smooth_l1_grad(d, sigma) / 24.0;
  }
  return total / 24.0;
}

nn::Tensor cls_loss_op(const nn::Tensor& probs, std::span<const std::size_t> positives,
                       std::span<const std::size_t> negatives, const LossConfig& cfg) {
  const auto pv = probs.values();
  std::vector<double> pos(positives.size()), neg(negatives.size());
  for (std::size_t i = 0; i < positives.size(); ++i) pos[i] = pv[positives[i]];
  for (std::size_t i = 0; i < negatives.size(); ++i) neg[i] = pv[negatives[i]];
  ClsLoss loss = cls_loss(pos, neg, cfg);
  // Scatter the per-sample gradient into a dense buffer once.
  auto dense = std::make_shared<std::vector<double>>(probs.numel(), 0.0);
  for (std::size_t i = 0; i < positives.size(); ++i) (*dense)[positives[i]] += loss.grad_pos[i];
  for (std::size_t i = 0; i < negatives.size(); ++i) (*dense)[negatives[i]] += loss.grad_neg[i];
  return nn::make_result(nn::Shape{}, {loss.value}, {probs}, [dense](nn::Node& self) {
    nn::Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    const double g = self.grad[0];
    for (std::size_t i = 0; i < dense->size(); ++i) p.grad[i] += g * (*dense)[i];
  });
}

nn::Tensor reg_loss_op(const nn::Tensor& reg, std::span<const std::size_t> positives,
                       std::span<const RpnDelta> targets, double sigma) {
  if (positives.size() != targets.size()) throw ShapeMismatch("reg_loss_op: positives vs targets");
  if (reg.numel() % 7 != 0) throw ShapeMismatch("reg_loss_op: reg size not a multiple of 7");
  const auto rv = reg.values();
  std::vector<RpnDelta> pred(positives.size());
  for (std::size_t i = 0; i < positives.size(); ++i) {
    if (positives[i] * 7 + 7 > rv.size()) throw ShapeMismatch("reg_loss_op: anchor out of range");
    for (std::size_t k = 0; k < 7; ++k) pred[i][k] = rv[positives[i] * 7 + k];
  }
  std::vector<RpnDelta> grad;
  const double value = reg_loss_rpn(pred, targets, sigma, &grad);
  auto idx = std::make_shared<std::vector<std::size_t>>(positives.begin(), positives.end());
  auto g7 = std::make_shared<std::vector<RpnDelta>>(std::move(grad));
  return nn::make_result(nn::Shape{}, {value}, {reg}, [idx, g7](nn::Node& self) {
    nn::Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    const double g = self.grad[0];
    for (std::size_t i = 0; i < idx->size(); ++i) {
      for (std::size_t k = 0; k < 7; ++k) p.grad[(*idx)[i] * 7 + k] += g * (*g7)[i][k];
    }
  });
}

nn::Tensor corner_loss_op(const nn::Tensor& pred, std::span<const CornerTarget> targets,
                          double sigma) {
  if (pred.ndim() != 2 || pred.dim(1) != 24 || pred.dim(0) != targets.size()) {
    throw ShapeMismatch("corner_loss_op: prediction " + nn::shape_str(pred.shape()) + " for " +
                        std::to_string(targets.size()) + " targets");
  }
  const std::size_t rows = targets.size();
  auto grad = std::make_shared<std::vector<double>>(rows * 24, 0.0);
  double total = 0.0;
  const auto pv = pred.values();
  for (std::size_t r = 0; r < rows; ++r) {
    CornerTarget p{};
    std::copy_n(pv.begin() + r * 24, 24, p.begin());
    CornerTarget g{};
    total += corner_loss(p, targets[r], sigma, &g);
    for (std::size_t k = 0; k < 24; ++k) (*grad)[r * 24 + k] = g[k] / static_cast<double>(rows);
  }
  const double value = rows ? total / static_cast<double>(rows) : 0.0;
  return nn::make_result(nn::Shape{}, {value}, {pred}, [grad](nn::Node& self) {
    nn::Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    const double g = self.grad[0];
    for (std::size_t i = 0; i < grad->size(); ++i) p.grad[i] += g * (*grad)[i];
  });
}

}  // namespace fastpoint
