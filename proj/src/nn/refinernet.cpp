// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastpoint/nn/refinernet.hpp"

#include <random>

#include "fastpoint/anchors.hpp"
#include "fastpoint/error.hpp"
#include "fastpoint/nn/ops.hpp"

namespace fastpoint::nn {

void RefinerConfig::validate() const {
  if (feature_channels == 0 || coord_channels == 0 || num_classes == 0) {
    throw ConfigMismatch("refiner widths and class count must be positive");
  }
  if (pointnet.size() != 2) throw ConfigMismatch("refiner expects 2 shared MLP layers");
  if (head.size() != 1) throw ConfigMismatch("refiner expects one hidden head layer");
  for (std::size_t w : pointnet) {
    if (w == 0) throw ConfigMismatch("refiner widths must be positive");
  }
  if (head[0] == 0) throw ConfigMismatch("refiner widths must be positive");
}

RefinerNet::RefinerNet(RefinerConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  auto dense = [this, &rng](const std::string& name, std::size_t out, std::size_t in, double gain = 1.0) {
    std::vector<double> w = fan_in_uniform(out * in, in, rng);
    for (double& v : w) v *= gain;
    params_.add(name + ".w", {out, in}, std::move(w), ParamKind::kWeight);
    params_.add(name + ".b", {out}, std::vector<double>(out, 0.0), ParamKind::kNoDecay);
  };
  const std::size_t cat = cfg_.coord_channels + cfg_.feature_channels;
  dense("refiner.coord", cfg_.coord_channels, 3);
  if (cfg_.attention == AttentionMode::kChannel) dense("refiner.attention", cat, cfg_.feature_channels);
  if (cfg_.attention == AttentionMode::kScalar) dense("refiner.attention", 1, cfg_.feature_channels);
  dense("refiner.mlp1", cfg_.pointnet[0], cat);
  dense("refiner.mlp2", cfg_.pointnet[1], cfg_.pointnet[0]);
  const std::size_t pooled = cfg_.pointnet[1] + (cfg_.num_classes > 1 ? cfg_.num_classes : 0);
  dense("refiner.head1", cfg_.head[0], pooled);
  // Small output init: the first refinements stay near the proposal.
  dense("refiner.head2", 24 * cfg_.num_classes, cfg_.head[0], 0.01);
}

Tensor RefinerNet::forward(std::span<const BoxFeature> boxes, std::span<const std::size_t> class_ids) {
  if (boxes.empty()) return Tensor(Shape{0, 24 * cfg_.num_classes});
  if (cfg_.num_classes > 1 && class_ids.size() != boxes.size()) {
    throw ConfigMismatch("refiner needs one class id per proposal");
  }
  const std::size_t cf = cfg_.feature_channels;
  std::vector<std::size_t> offsets{0};
  std::size_t total = 0;
  for (const BoxFeature& b : boxes) {
    if (b.size() == 0) throw EmptyProposal("proposal without points");
    if (b.channels != cf) throw ShapeMismatch("box feature has " + std::to_string(b.channels) + " channels, refiner expects " + std::to_string(cf));
    total += b.size();
    offsets.push_back(total);
  }
  std::vector<double> coords;
  std::vector<double> feats;
  coords.reserve(total * 3);
  feats.reserve(total * cf);
  for (const BoxFeature& b : boxes) {
    for (const Vec3& c : b.coords) coords.insert(coords.end(), {c.x, c.y, c.z});
    feats.insert(feats.end(), b.features.begin(), b.features.end());
  }
  const Tensor xyz(Shape{total, 3}, std::move(coords));
  const Tensor conv(Shape{total, cf}, std::move(feats));
  auto p = [this](const std::string& n) { return params_.get(n); };

  const Tensor h = relu(linear(xyz, p("refiner.coord.w"), p("refiner.coord.b")));
  const std::array<Tensor, 2> parts{h, conv};
  Tensor x = concat(parts, 1);
  if (cfg_.attention == AttentionMode::kChannel) {
    x = mul(x, sigmoid(linear(conv, p("refiner.attention.w"), p("refiner.attention.b"))));
  } else if (cfg_.attention == AttentionMode::kScalar) {
    x = mul_rows(x, sigmoid(linear(conv, p("refiner.attention.w"), p("refiner.attention.b"))));
  }
  x = relu(linear(x, p("refiner.mlp1.w"), p("refiner.mlp1.b")));
  x = relu(linear(x, p("refiner.mlp2.w"), p("refiner.mlp2.b")));
  Tensor g = segment_max(x, offsets);
  if (cfg_.num_classes > 1) {
    std::vector<double> onehot(boxes.size() * cfg_.num_classes, 0.0);
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (class_ids[i] >= cfg_.num_classes) throw ConfigMismatch("class id out of range");
      onehot[i * cfg_.num_classes + class_ids[i]] = 1.0;
    }
    const std::array<Tensor, 2> gp{g, Tensor(Shape{boxes.size(), cfg_.num_classes}, std::move(onehot))};
    g = concat(gp, 1);
  }
  Tensor y = relu(linear(g, p("refiner.head1.w"), p("refiner.head1.b")));
  Tensor residual = linear(y, p("refiner.head2.w"), p("refiner.head2.b"));

  const std::size_t width = 24 * cfg_.num_classes;
  std::vector<double> prior(boxes.size() * width);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const CornerTarget own = encode_corners(boxes[i].proposal, boxes[i].proposal);
    for (std::size_t c = 0; c < cfg_.num_classes; ++c) {
      std::copy(own.begin(), own.end(), prior.begin() + static_cast<std::ptrdiff_t>(i * width + c * 24));
    }
  }
  return add(residual, Tensor(Shape{boxes.size(), width}, std::move(prior)));
}

}  // namespace fastpoint::nn
