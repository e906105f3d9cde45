// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

/// \file
/// Differentiable operations. Feature maps are channel-first:
/// 3D maps are (C, D0, D1, D2), 2D maps are (C, H, W), point sets are (N, C).

#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "fastpoint/nn/tensor.hpp"

namespace fastpoint::nn {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
/// out.shape[i] = a.shape[axes[i]]
Tensor permute(const Tensor& a, std::span<const std::size_t> axes);
/// Concatenate along `axis`; all other dims must agree.
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
/// Picks rows of a (N, C) tensor.
Tensor index_rows(const Tensor& a, std::span<const std::size_t> rows);

/// x (N, in), w (out, in), b (out) -> (N, out)
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

/// Multiplies every row i of x (N, C) by the scalar s (N, 1)[i].
Tensor mul_rows(const Tensor& x, const Tensor& s);

/// Max over each contiguous row segment [offsets[k], offsets[k+1]) of x (N, C).
/// Returns (offsets.size() - 1, C). Segments must be non-empty.
Tensor segment_max(const Tensor& x, std::span<const std::size_t> offsets);

struct Conv3dGeometry {
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> padding{0, 0, 0};
};

struct Conv2dGeometry {
  std::array<std::size_t, 2> stride{1, 1};
  std::array<std::size_t, 2> padding{0, 0};
};

/// Floor formula for a strided, padded cross-correlation.
std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride,
                          std::size_t padding);
/// Output size of a transposed convolution.
std::size_t deconv_out_size(std::size_t in, std::size_t kernel, std::size_t stride,
                            std::size_t padding);

/// x (Ci, D0, D1, D2), w (Co, Ci, k0, k1, k2), b (Co) or undefined.
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, const Conv3dGeometry& geom);

/// x (Ci, H, W), w (Co, Ci, kh, kw), b (Co) or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, const Conv2dGeometry& geom);

/// Transposed 2D convolution. x (Ci, H, W), w (Ci, Co, kh, kw), b (Co) or undefined.
Tensor deconv2d(const Tensor& x, const Tensor& w, const Tensor& b, const Conv2dGeometry& geom);

enum class NormMode { kTrain, kEval };

/// Per-channel running statistics, updated in train mode.
struct BatchNormStats {
  std::vector<double> running_mean;
  std::vector<double> running_var;
};

/// Per-channel normalization of a channel-first tensor (C, ...).
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                 NormMode mode, double momentum = 0.1, double eps = 1e-5);

/// Shared per-point MLP (one linear layer + ReLU) followed by a masked max
/// over the point axis. `dense` is (..., P, F); `counts` holds the number of
/// valid leading slots per voxel. Output is (..., C); empty voxels give zero.
/// w (C, F), b (C).
Tensor voxel_encoder(const Tensor& dense, std::span<const std::size_t> counts, const Tensor& w,
                     const Tensor& b);

/// Sparse input form of voxel_encoder: `features` holds the stored points of
/// occupied voxels back to back (rows of F values), `voxel_offsets` the row
/// range of each occupied voxel and `cells` its flat output index. The
/// output has `out_shape` with channels first: (C, cells...).
Tensor voxel_encoder_sparse(std::span<const double> features,
                            std::span<const std::size_t> voxel_offsets,
                            std::span<const std::size_t> cells, Shape out_shape, const Tensor& w,
                            const Tensor& b);

}  // namespace fastpoint::nn
