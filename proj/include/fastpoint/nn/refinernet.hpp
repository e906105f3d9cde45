// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

/// \file
/// Refinement network. Per point: a coordinate MLP, concatenation with the
/// looked-up convolution feature, an attention gate computed from the
/// convolution feature, two shared MLP layers; then a max over the points of
/// each proposal, an optional one-hot class vector and a two-layer head that
/// emits 24 corner offsets per class.
///
/// The head predicts a residual over the proposal's own canonical corners,
/// so an all-zero head returns the proposal unchanged.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fastpoint/nn/parameters.hpp"
#include "fastpoint/refiner_features.hpp"

namespace fastpoint::nn {

enum class AttentionMode {
  kChannel,  ///< one gate per concatenated channel
  kScalar,   ///< one gate per point
  kNone,     ///< gate fixed to 1 (plain concatenation)
};

struct RefinerConfig {
  std::size_t feature_channels = 384;
  std::size_t coord_channels = 128;
  std::vector<std::size_t> pointnet{256, 512};
  std::vector<std::size_t> head{256};
  std::size_t num_classes = 1;
  AttentionMode attention = AttentionMode::kChannel;

  void validate() const;
};

class RefinerNet {
 public:
  RefinerNet(RefinerConfig cfg, std::uint64_t seed);

  /// Returns (P, 24 * num_classes) corner offsets in each proposal's frame.
  /// `class_ids` is required when num_classes > 1. Throws EmptyProposal for
  /// a proposal without points.
  Tensor forward(std::span<const BoxFeature> boxes, std::span<const std::size_t> class_ids = {});

  Parameters& params() { return params_; }
  const Parameters& params() const { return params_; }
  const RefinerConfig& config() const { return cfg_; }

 private:
  RefinerConfig cfg_;
  Parameters params_;
};

}  // namespace fastpoint::nn
