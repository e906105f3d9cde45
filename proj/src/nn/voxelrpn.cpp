// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastpoint/nn/voxelrpn.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "fastpoint/error.hpp"

namespace fastpoint::nn {

NetConfig NetConfig::reference() {
  NetConfig c;
  // Z: 20 -> 10 -> 9 -> 5 -> 3 -> 2 -> 1; XY stride 2 at layers 1 and 4.
  c.conv3d = {
      {{3, 3, 3}, 64, {2, 2, 2}, {1, 1, 1}},
      {{3, 3, 2}, 64, {1, 1, 1}, {1, 1, 0}},
      {{3, 3, 3}, 64, {1, 1, 2}, {1, 1, 1}},
      {{3, 3, 3}, 64, {2, 2, 2}, {1, 1, 1}},
      {{3, 3, 2}, 64, {1, 1, 1}, {1, 1, 0}},
      {{3, 3, 2}, 64, {1, 1, 1}, {1, 1, 0}},
  };
  auto block = [](std::size_t layers, std::size_t channels, std::size_t first_stride) {
    std::vector<Conv2dLayer> b(layers, Conv2dLayer{3, channels, 1, 1});
    b.front().stride = first_stride;
    return b;
  };
  c.blocks = {block(4, 128, 1), block(6, 128, 2), block(6, 256, 2)};
  c.deconvs = {{1, 1, 128}, {2, 2, 128}, {4, 4, 128}};
  return c;
}

NetConfig NetConfig::scaled(double mult) const {
  if (!(mult > 0.0)) throw ConfigMismatch("width multiplier must be positive");
  auto scale = [mult](std::size_t ch) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(ch) * mult)));
  };
  NetConfig c = *this;
  for (auto& l : c.conv3d) l.channels = scale(l.channels);
  for (auto& b : c.blocks) {
    for (auto& l : b) l.channels = scale(l.channels);
  }
  for (auto& d : c.deconvs) d.channels = scale(d.channels);
  return c;
}

void NetConfig::validate() const {
  if (conv3d.size() != 6) throw ConfigMismatch("expected 6 conv3d layers, got " + std::to_string(conv3d.size()));
  if (blocks.size() != 3) throw ConfigMismatch("expected 3 conv2d blocks, got " + std::to_string(blocks.size()));
  if (deconvs.size() != 3) throw ConfigMismatch("expected 3 deconv branches, got " + std::to_string(deconvs.size()));
  if (point_features == 0 || encoder_channels == 0 || anchors_per_cell == 0) {
    throw ConfigMismatch("encoder sizes and anchor count must be positive");
  }
  for (const auto& l : conv3d) {
    for (std::size_t a = 0; a < 3; ++a) {
      if (l.kernel[a] == 0 || l.stride[a] == 0) throw ConfigMismatch("conv3d kernel/stride must be positive");
    }
    if (l.channels == 0) throw ConfigMismatch("conv3d channels must be positive");
  }
  for (const auto& b : blocks) {
    if (b.empty()) throw ConfigMismatch("conv2d block without layers");
    for (const auto& l : b) {
      if (l.kernel == 0 || l.stride == 0 || l.channels == 0) throw ConfigMismatch("conv2d sizes must be positive");
    }
  }
  for (const auto& d : deconvs) {
    if (d.kernel == 0 || d.stride == 0 || d.channels == 0) throw ConfigMismatch("deconv sizes must be positive");
  }
  if (!(cls_prior > 0.0 && cls_prior < 1.0)) throw ConfigMismatch("cls_prior must lie in (0, 1)");
}

namespace {

std::size_t checked_out(std::size_t in, std::size_t k, std::size_t s, std::size_t p, const std::string& where) {
  if (in + 2 * p < k) {
    throw ConfigMismatch(where + ": kernel " + std::to_string(k) + " does not fit input " + std::to_string(in));
  }
  return (in + 2 * p - k) / s + 1;
}

}  // namespace

ShapePlan infer_shapes(const NetConfig& cfg, const std::array<std::size_t, 3>& grid_dims) {
  cfg.validate();
  ShapePlan plan;
  // (C, Y, X, Z)
  std::size_t ch = cfg.encoder_channels;
  std::size_t y = grid_dims[1], x = grid_dims[0], z = grid_dims[2];
  plan.encoder = {ch, y, x, z};
  for (std::size_t i = 0; i < cfg.conv3d.size(); ++i) {
    const auto& l = cfg.conv3d[i];
    const std::string where = "conv3d layer " + std::to_string(i + 1);
    x = checked_out(x, l.kernel[0], l.stride[0], l.padding[0], where);
    y = checked_out(y, l.kernel[1], l.stride[1], l.padding[1], where);
    z = checked_out(z, l.kernel[2], l.stride[2], l.padding[2], where);
    ch = l.channels;
    plan.conv3d.push_back({ch, y, x, z});
  }
  ch *= z;
  plan.folded = {ch, y, x};
  std::size_t fused_c = 0;
  std::size_t fused_y = 0, fused_x = 0;
  for (std::size_t b = 0; b < cfg.blocks.size(); ++b) {
    std::vector<Shape> shapes;
    for (std::size_t i = 0; i < cfg.blocks[b].size(); ++i) {
      const auto& l = cfg.blocks[b][i];
      const std::string where = "block " + std::to_string(b + 2) + " layer " + std::to_string(i + 1);
      y = checked_out(y, l.kernel, l.stride, l.padding, where);
      x = checked_out(x, l.kernel, l.stride, l.padding, where);
      ch = l.channels;
      shapes.push_back({ch, y, x});
    }
    plan.blocks.push_back(shapes);
    const auto& d = cfg.deconvs[b];
    const std::size_t uy = (y - 1) * d.stride + d.kernel;
    const std::size_t ux = (x - 1) * d.stride + d.kernel;
    plan.deconvs.push_back({d.channels, uy, ux});
    if (b == 0) {
      fused_y = uy;
      fused_x = ux;
    } else if (uy != fused_y || ux != fused_x) {
      throw ConfigMismatch("deconv branch " + std::to_string(b + 1) + " gives " + shape_str({uy, ux}) +
                           ", branch 1 gives " + shape_str({fused_y, fused_x}));
    }
    fused_c += d.channels;
  }
  plan.fused = {fused_c, fused_y, fused_x};
  plan.cls_map = {fused_y, fused_x, cfg.anchors_per_cell};
  plan.reg_map = {fused_y, fused_x, cfg.anchors_per_cell * 7};
  return plan;
}

VoxelRpn::VoxelRpn(NetConfig cfg, std::array<std::size_t, 3> grid_dims, std::uint64_t seed)
    : cfg_(std::move(cfg)), dims_(grid_dims), plan_(infer_shapes(cfg_, grid_dims)) {
  std::mt19937_64 rng(seed);
  auto add_norm = [this](const std::string& prefix, std::size_t ch) {
    if (!cfg_.batchnorm) return;
    params_.add(prefix + ".bn.gamma", {ch}, std::vector<double>(ch, 1.0), ParamKind::kNoDecay);
    params_.add(prefix + ".bn.beta", {ch}, std::vector<double>(ch, 0.0), ParamKind::kNoDecay);
    params_.add(prefix + ".bn.running_mean", {ch}, std::vector<double>(ch, 0.0), ParamKind::kBuffer);
    params_.add(prefix + ".bn.running_var", {ch}, std::vector<double>(ch, 1.0), ParamKind::kBuffer);
  };
  auto add_bias = [this](const std::string& prefix, std::size_t ch) {
    if (cfg_.batchnorm) return;
    params_.add(prefix + ".b", {ch}, std::vector<double>(ch, 0.0), ParamKind::kNoDecay);
  };

  const std::size_t f = cfg_.point_features;
  const std::size_t ce = cfg_.encoder_channels;
  params_.add("rpn.encoder.w", {ce, f}, fan_in_uniform(ce * f, f, rng), ParamKind::kWeight);
  params_.add("rpn.encoder.b", {ce}, std::vector<double>(ce, 0.0), ParamKind::kNoDecay);

  std::size_t ch = ce;
  for (std::size_t i = 0; i < cfg_.conv3d.size(); ++i) {
    const auto& l = cfg_.conv3d[i];
    const std::string p = "rpn.conv3d." + std::to_string(i);
    const std::size_t fan = ch * l.kernel[0] * l.kernel[1] * l.kernel[2];
    params_.add(p + ".w", {l.channels, ch, l.kernel[1], l.kernel[0], l.kernel[2]},
                fan_in_uniform(l.channels * fan, fan, rng), ParamKind::kWeight);
    add_bias(p, l.channels);
    add_norm(p, l.channels);
    ch = l.channels;
  }
  ch = plan_.folded[0];
  for (std::size_t b = 0; b < cfg_.blocks.size(); ++b) {
    for (std::size_t i = 0; i < cfg_.blocks[b].size(); ++i) {
      const auto& l = cfg_.blocks[b][i];
      const std::string p = "rpn.block" + std::to_string(b + 2) + "." + std::to_string(i);
      const std::size_t fan = ch * l.kernel * l.kernel;
      params_.add(p + ".w", {l.channels, ch, l.kernel, l.kernel}, fan_in_uniform(l.channels * fan, fan, rng),
                  ParamKind::kWeight);
      add_bias(p, l.channels);
      add_norm(p, l.channels);
      ch = l.channels;
    }
    const auto& d = cfg_.deconvs[b];
    const std::string p = "rpn.deconv" + std::to_string(b + 2);
    const std::size_t fan = ch * d.kernel * d.kernel / (d.stride * d.stride);
    params_.add(p + ".w", {ch, d.channels, d.kernel, d.kernel},
                fan_in_uniform(ch * d.channels * d.kernel * d.kernel, std::max<std::size_t>(fan, 1), rng),
                ParamKind::kWeight);
    add_bias(p, d.channels);
    add_norm(p, d.channels);
  }
  const std::size_t cf = plan_.fused_channels();
  const std::size_t a = cfg_.anchors_per_cell;
  params_.add("rpn.head.cls.w", {a, cf, 1, 1}, fan_in_uniform(a * cf, cf, rng), ParamKind::kWeight);
  const double prior_logit = std::log(cfg_.cls_prior / (1.0 - cfg_.cls_prior));
  params_.add("rpn.head.cls.b", {a}, std::vector<double>(a, prior_logit), ParamKind::kNoDecay);
  // Small regression init keeps the first proposals close to the anchors.
  std::vector<double> reg_w = fan_in_uniform(7 * a * cf, cf, rng);
  for (double& v : reg_w) v *= 0.1;
  params_.add("rpn.head.reg.w", {7 * a, cf, 1, 1}, std::move(reg_w), ParamKind::kWeight);
  params_.add("rpn.head.reg.b", {7 * a}, std::vector<double>(7 * a, 0.0), ParamKind::kNoDecay);
}

void VoxelRpn::fill(double v) {
  for (auto& e : params_.entries()) {
    auto vals = e.tensor.values_mut();
    std::fill(vals.begin(), vals.end(), v);
  }
}

Tensor VoxelRpn::norm_relu(const std::string& prefix, const Tensor& x, NormMode mode) {
  Tensor y = x;
  if (cfg_.batchnorm) {
    Tensor& rm = params_.get(prefix + ".bn.running_mean");
    Tensor& rv = params_.get(prefix + ".bn.running_var");
    BatchNormStats stats{{rm.values().begin(), rm.values().end()}, {rv.values().begin(), rv.values().end()}};
    y = batchnorm(x, params_.get(prefix + ".bn.gamma"), params_.get(prefix + ".bn.beta"), stats, mode,
                  cfg_.bn_momentum);
    if (mode == NormMode::kTrain) {
      std::copy(stats.running_mean.begin(), stats.running_mean.end(), rm.values_mut().begin());
      std::copy(stats.running_var.begin(), stats.running_var.end(), rv.values_mut().begin());
    }
  }
  return relu(y);
}

RpnOutput VoxelRpn::forward(const VoxelGrid& grid, NormMode mode) {
  if (grid.dims != dims_) {
    throw ConfigMismatch("grid dims " + shape_str({grid.dims[0], grid.dims[1], grid.dims[2]}) +
                         " but network built for " + shape_str({dims_[0], dims_[1], dims_[2]}));
  }
  const std::size_t f = cfg_.point_features;
  if (f != 4) throw ConfigMismatch("voxel points carry 4 features");
  const std::size_t nx = dims_[0], ny = dims_[1], nz = dims_[2];

  std::vector<double> feats;
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> cells;
  offsets.reserve(grid.voxels.size() + 1);
  cells.reserve(grid.voxels.size());
  for (const Voxel& v : grid.voxels) {
    for (const Point& p : v.points) feats.insert(feats.end(), {p.x, p.y, p.z, p.r});
    offsets.push_back(offsets.back() + v.points.size());
    cells.push_back((v.index[1] * nx + v.index[0]) * nz + v.index[2]);
  }
  auto bias_of = [this](const std::string& p) { return cfg_.batchnorm ? Tensor() : params_.get(p + ".b"); };

  Tensor x = voxel_encoder_sparse(feats, offsets, cells, {cfg_.encoder_channels, ny, nx, nz},
                                  params_.get("rpn.encoder.w"), params_.get("rpn.encoder.b"));
  for (std::size_t i = 0; i < cfg_.conv3d.size(); ++i) {
    const auto& l = cfg_.conv3d[i];
    const std::string p = "rpn.conv3d." + std::to_string(i);
    Conv3dGeometry g{{l.stride[1], l.stride[0], l.stride[2]}, {l.padding[1], l.padding[0], l.padding[2]}};
    x = norm_relu(p, conv3d(x, params_.get(p + ".w"), bias_of(p), g), mode);
  }
  // (C, Y, X, Z) -> (C * Z, Y, X)
  const Shape& s3 = x.shape();
  if (s3[3] > 1) {
    const std::array<std::size_t, 4> axes{0, 3, 1, 2};
    x = permute(x, axes);
  }
  x = reshape(x, plan_.folded);

  std::vector<Tensor> branches;
  for (std::size_t b = 0; b < cfg_.blocks.size(); ++b) {
    for (std::size_t i = 0; i < cfg_.blocks[b].size(); ++i) {
      const auto& l = cfg_.blocks[b][i];
      const std::string p = "rpn.block" + std::to_string(b + 2) + "." + std::to_string(i);
      Conv2dGeometry g{{l.stride, l.stride}, {l.padding, l.padding}};
      x = norm_relu(p, conv2d(x, params_.get(p + ".w"), bias_of(p), g), mode);
    }
    const auto& d = cfg_.deconvs[b];
    const std::string p = "rpn.deconv" + std::to_string(b + 2);
    Conv2dGeometry g{{d.stride, d.stride}, {0, 0}};
    branches.push_back(norm_relu(p, deconv2d(x, params_.get(p + ".w"), bias_of(p), g), mode));
  }
  RpnOutput out;
  out.fused = concat(branches, 0);
  const Conv2dGeometry unit{};
  const std::array<std::size_t, 3> to_hwc{1, 2, 0};
  Tensor logits = conv2d(out.fused, params_.get("rpn.head.cls.w"), params_.get("rpn.head.cls.b"), unit);
  out.cls = sigmoid(permute(logits, to_hwc));
  Tensor reg = conv2d(out.fused, params_.get("rpn.head.reg.w"), params_.get("rpn.head.reg.b"), unit);
  out.reg = permute(reg, to_hwc);
  return out;
}

}  // namespace fastpoint::nn
