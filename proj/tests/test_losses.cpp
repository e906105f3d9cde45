// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "fastpoint/error.hpp"
#include "fastpoint/losses.hpp"

namespace fastpoint {
namespace {

TEST(Bce, ClampsProbabilities) {
  EXPECT_NEAR(bce(0.5, 1), std::log(2.0), 1e-15);
  EXPECT_NEAR(bce(0.0, 1), -std::log(1e-7), 1e-9);
  EXPECT_EQ(bce_grad(0.0, 1), 0.0);
  EXPECT_NEAR(bce_grad(0.25, 0), 1.0 / 0.75, 1e-12);
}

TEST(ClsLoss, OnePositiveOneNegativeAtHalf) {
  const std::vector<double> pos{0.5}, neg{0.5};
  const ClsLoss l = cls_loss(pos, neg, LossConfig{});
  EXPECT_NEAR(l.value, 11.0 * std::log(2.0), 1e-12);
  EXPECT_NEAR(l.positive_term, std::log(2.0), 1e-12);
}

TEST(ClsLoss, HardNegativeMiningKeepsLargestLosses) {
  LossConfig cfg;
  cfg.ohem_keep = 2;
  cfg.gamma = 1.0;
  const std::vector<double> neg{0.1, 0.9, 0.5, 0.9};
  const ClsLoss l = cls_loss({}, neg, cfg);
  EXPECT_EQ(l.kept_negatives, (std::vector<std::size_t>{1, 3}));
  EXPECT_NEAR(l.value, -std::log(0.1), 1e-12);
  EXPECT_EQ(l.grad_neg[0], 0.0);
  EXPECT_EQ(l.grad_neg[2], 0.0);
  EXPECT_NEAR(l.grad_neg[1], 0.5 / 0.1, 1e-9);
  EXPECT_EQ(l.positive_term, 0.0);
}

TEST(ClsLoss, EmptyListsContributeNothing) {
  const ClsLoss l = cls_loss({}, {}, LossConfig{});
  EXPECT_EQ(l.value, 0.0);
}

TEST(SmoothL1, BothBranchesAndContinuity) {
  const double s = 3.0, t = 1.0 / 9.0;
  EXPECT_NEAR(smooth_l1(0.05, s), 0.5 * 9 * 0.0025, 1e-15);
  EXPECT_NEAR(smooth_l1(-1.0, s), 1.0 - 0.5 / 9, 1e-15);
  EXPECT_NEAR(smooth_l1(std::nextafter(t, 0.0), s), smooth_l1(std::nextafter(t, 1.0), s), 1e-12);
  EXPECT_NEAR(smooth_l1_grad(2.0, s), 1.0, 1e-15);
  EXPECT_NEAR(smooth_l1_grad(-2.0, s), -1.0, 1e-15);
  EXPECT_NEAR(smooth_l1_grad(0.05, s), 0.45, 1e-12);
}

TEST(RegLoss, MeanOverPositivesOfComponentSums) {
  std::vector<RpnDelta> pred(2), target(2);
  pred[0][0] = 1.0;
  pred[1][6] = -2.0;
  const double each = 1.0 - 0.5 / 9.0, other = 2.0 - 0.5 / 9.0;
  EXPECT_NEAR(reg_loss_rpn(pred, target, 3.0), (each + other) / 2, 1e-12);
  EXPECT_EQ(reg_loss_rpn({}, {}, 3.0), 0.0);
}

TEST(CornerLoss, MeanOverComponents) {
  CornerTarget p{}, t{};
  p[5] = 1.0;
  EXPECT_NEAR(corner_loss(p, t, 3.0), (1.0 - 0.5 / 9.0) / 24, 1e-12);
}

TEST(TensorLosses, AgreeWithPlainForms) {
  const nn::Tensor probs = nn::Tensor::parameter({6}, {0.2, 0.7, 0.4, 0.9, 0.1, 0.6});
  const std::vector<std::size_t> pos{1, 3}, neg{0, 2, 4, 5};
  LossConfig cfg;
  cfg.ohem_keep = 3;
  const double plain = cls_loss(std::vector<double>{0.7, 0.9}, std::vector<double>{0.2, 0.4, 0.1, 0.6}, cfg).value;
  EXPECT_NEAR(cls_loss_op(probs, pos, neg, cfg).item(), plain, 1e-12);

  std::vector<double> reg(14, 0.0);
  reg[7] = 0.5;
  const std::vector<std::size_t> rpos{1};
  const std::vector<RpnDelta> targets{RpnDelta{}};
  EXPECT_NEAR(reg_loss_op(nn::Tensor({14}, reg), rpos, targets, 3.0).item(),
              reg_loss_rpn(std::vector<RpnDelta>{{0.5, 0, 0, 0, 0, 0, 0}}, targets, 3.0), 1e-12);
}

TEST(LossConfig, Validation) {
  LossConfig c;
  c.ohem_keep = 0;
  EXPECT_THROW(c.validate(), ConfigMismatch);
  c = LossConfig{};
  c.sigma = 0.0;
  EXPECT_THROW(c.validate(), ConfigMismatch);
}

}  // namespace
}  // namespace fastpoint
