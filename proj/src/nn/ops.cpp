// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastpoint/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fastpoint/error.hpp"
#include "fastpoint/simd/kernels.hpp"

namespace fastpoint::nn {

namespace {

// Gradient buffer of parent i, or nullptr when that parent takes no gradient.
inline double* parent_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? p.ensure_grad().data() : nullptr;
}

inline const std::vector<double>& parent_value(const Node& self, std::size_t i) {
  return self.parents[i]->value;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeMismatch(std::string(op) + ": " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.ndim() != rank) {
    throw ShapeMismatch(std::string(what) + " expects rank " + std::to_string(rank) + ", got " +
                        shape_str(t.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& g = self.grad;
    for (std::size_t k = 0; k < 2; ++k) {
      if (double* pg = parent_grad(self, k)) {
        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& g = self.grad;
    if (double* pa = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) pa[i] += g[i];
    }
    if (double* pb = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < g.size(); ++i) pb[i] -= g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& g = self.grad;
    const auto& av = parent_value(self, 0);
    const auto& bv = parent_value(self, 1);
    if (double* pa = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) pa[i] += g[i] * bv[i];
    }
    if (double* pb = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < g.size(); ++i) pb[i] += g[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v *= s;
  return make_result(a.shape(), std::move(out), {a}, [s](Node& self) {
    if (double* pa = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa[i] += s * self.grad[i];
    }
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    if (double* pa = parent_grad(self, 0)) {
      const auto& av = parent_value(self, 0);
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        if (av[i] > 0.0) pa[i] += self.grad[i];
      }
    }
  });
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.numel());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = av[i];
    // Split by sign so exp never overflows.
    out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    if (double* pa = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const double y = self.value[i];
        pa[i] += self.grad[i] * y * (1.0 - y);
      }
    }
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return make_result(Shape{}, {s}, {a}, [](Node& self) {
    if (double* pa = parent_grad(self, 0)) {
      const double g = self.grad[0];
      const std::size_t n = self.parents[0]->value.size();
      for (std::size_t i = 0; i < n; ++i) pa[i] += g;
    }
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeMismatch("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw ShapeMismatch("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return make_result(std::move(shape), std::move(out), {a}, [](Node& self) {
    if (double* pa = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa[i] += self.grad[i];
    }
  });
}

Tensor permute(const Tensor& a, std::span<const std::size_t> axes) {
  const Shape& in = a.shape();
  const std::size_t rank = in.size();
  if (axes.size() != rank) throw ShapeMismatch("permute: axis count mismatch");
  std::vector<bool> seen(rank, false);
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (axes[i] >= rank || seen[axes[i]]) throw ShapeMismatch("permute: invalid axes");
    seen[axes[i]] = true;
    out_shape[i] = in[axes[i]];
  }
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * in[i];
  // Source offset of each output element, walked with an odometer.
  const std::size_t n = a.numel();
  auto src_index = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < n; ++k) {
    (*src_index)[k] = offset;
    for (std::size_t d = rank; d-- > 0;) {
      ++counter[d];
      offset += in_strides[axes[d]];
      if (counter[d] < out_shape[d]) break;
      offset -= in_strides[axes[d]] * out_shape[d];
      counter[d] = 0;
    }
  }
  std::vector<double> out(n);
  const auto av = a.values();
  for (std::size_t k = 0; k < n; ++k) out[k] = av[(*src_index)[k]];
  return make_result(std::move(out_shape), std::move(out), {a}, [src_index](Node& self) {
    if (double* pa = parent_grad(self, 0)) {
      for (std::size_t k = 0; k < self.grad.size(); ++k) pa[(*src_index)[k]] += self.grad[k];
    }
  });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeMismatch("concat of nothing");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeMismatch("concat axis out of range");
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  std::size_t total_axis = 0;
  for (const Tensor& t : parts) {
    const Shape& s = t.shape();
    if (s.size() != first.size()) throw ShapeMismatch("concat rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) {
        throw ShapeMismatch("concat " + shape_str(s) + " vs " + shape_str(first));
      }
    }
    total_axis += s[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total_axis;
  std::vector<double> out(numel(out_shape));
  std::vector<std::size_t> widths;
  const std::size_t row = total_axis * inner;
  std::size_t col_offset = 0;
  for (const Tensor& t : parts) {
    const std::size_t width = t.shape()[axis] * inner;
    widths.push_back(width);
    const auto tv = t.values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(tv.begin() + o * width, width, out.begin() + o * row + col_offset);
    }
    col_offset += width;
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return make_result(std::move(out_shape), std::move(out), std::move(parents),
                     [widths, outer, row](Node& self) {
                       std::size_t col = 0;
                       for (std::size_t k = 0; k < widths.size(); ++k) {
                         if (double* pg = parent_grad(self, k)) {
                           for (std::size_t o = 0; o < outer; ++o) {
                             const double* src = self.grad.data() + o * row + col;
                             double* dst = pg + o * widths[k];
                             for (std::size_t i = 0; i < widths[k]; ++i) dst[i] += src[i];
                           }
                         }
                         col += widths[k];
                       }
                     });
}

Tensor index_rows(const Tensor& a, std::span<const std::size_t> rows) {
  require_rank(a, 2, "index_rows");
  const std::size_t n = a.dim(0);
  const std::size_t c = a.dim(1);
  std::vector<double> out(rows.size() * c);
  const auto av = a.values();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n) throw ShapeMismatch("index_rows: row out of range");
    std::copy_n(av.begin() + rows[i] * c, c, out.begin() + i * c);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make_result(Shape{rows.size(), c}, std::move(out), {a}, [idx, c](Node& self) {
    if (double* pa = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < c; ++j) pa[idx[i] * c + j] += self.grad[i * c + j];
      }
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank(x, 2, "linear input");
  require_rank(w, 2, "linear weight");
  const std::size_t n = x.dim(0);
  const std::size_t in = x.dim(1);
  const std::size_t out_dim = w.dim(0);
  if (w.dim(1) != in) {
    throw ShapeMismatch("linear: input " + shape_str(x.shape()) + " weight " +
                        shape_str(w.shape()));
  }
  if (b.defined() && (b.ndim() != 1 || b.dim(0) != out_dim)) {
    throw ShapeMismatch("linear: bias " + shape_str(b.shape()));
  }
  std::vector<double> out(n * out_dim, 0.0);
  if (b.defined()) {
    const auto bv = b.values();
    for (std::size_t i = 0; i < n; ++i) std::copy(bv.begin(), bv.end(), out.begin() + i * out_dim);
  }
  // out = x * w^T, via an explicit transpose so the inner loop runs along out_dim.
  std::vector<double> wt(in * out_dim);
  const auto wv = w.values();
  for (std::size_t o = 0; o < out_dim; ++o) {
    for (std::size_t i = 0; i < in; ++i) wt[i * out_dim + o] = wv[o * in + i];
  }
  simd::kernels().gemm_nn(n, out_dim, in, x.values().data(), in, wt.data(), out_dim, out.data(),
                          out_dim);
  std::vector<Tensor> parents{x, w};
  if (b.defined()) parents.push_back(b);
  return make_result(Shape{n, out_dim}, std::move(out), std::move(parents),
                     [n, in, out_dim](Node& self) {
                       const double* g = self.grad.data();
                       if (double* dx = parent_grad(self, 0)) {
                         simd::kernels().gemm_nn(n, in, out_dim, g, out_dim,
                                                 parent_value(self, 1).data(), in, dx, in);
                       }
                       if (double* dw = parent_grad(self, 1)) {
                         simd::gemm_tn(out_dim, in, n, g, out_dim, parent_value(self, 0).data(), in,
                                       dw, in);
                       }
                       if (self.parents.size() > 2) {
                         if (double* db = parent_grad(self, 2)) {
                           for (std::size_t i = 0; i < n; ++i) {
                             for (std::size_t o = 0; o < out_dim; ++o) db[o] += g[i * out_dim + o];
                           }
                         }
                       }
                     });
}

Tensor mul_rows(const Tensor& x, const Tensor& s) {
  require_rank(x, 2, "mul_rows input");
  const std::size_t n = x.dim(0);
  const std::size_t c = x.dim(1);
  if (s.numel() != n) throw ShapeMismatch("mul_rows: scale count mismatch");
  std::vector<double> out(n * c);
  const auto xv = x.values();
  const auto sv = s.values();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = xv[i * c + j] * sv[i];
  }
  return make_result(x.shape(), std::move(out), {x, s}, [n, c](Node& self) {
    const auto& xv = parent_value(self, 0);
    const auto& sv = parent_value(self, 1);
    const double* g = self.grad.data();
    if (double* dx = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += g[i * c + j] * sv[i];
      }
    }
    if (double* ds = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < c; ++j) acc += g[i * c + j] * xv[i * c + j];
        ds[i] += acc;
      }
    }
  });
}

Tensor segment_max(const Tensor& x, std::span<const std::size_t> offsets) {
  require_rank(x, 2, "segment_max");
  if (offsets.size() < 2) throw ShapeMismatch("segment_max needs at least one segment");
  const std::size_t n = x.dim(0);
  const std::size_t c = x.dim(1);
  const std::size_t segs = offsets.size() - 1;
  if (offsets.front() != 0 || offsets.back() != n) {
    throw ShapeMismatch("segment_max: offsets must span all rows");
  }
  std::vector<double> out(segs * c);
  auto arg = std::make_shared<std::vector<std::size_t>>(segs * c);
  const auto xv = x.values();
  for (std::size_t s = 0; s < segs; ++s) {
    if (offsets[s + 1] <= offsets[s]) throw ShapeMismatch("segment_max: empty segment");
    for (std::size_t j = 0; j < c; ++j) {
      std::size_t best = offsets[s];
      double best_v = xv[best * c + j];
      for (std::size_t r = offsets[s] + 1; r < offsets[s + 1]; ++r) {
        if (xv[r * c + j] > best_v) {
          best_v = xv[r * c + j];
          best = r;
        }
      }
      out[s * c + j] = best_v;
      (*arg)[s * c + j] = best;
    }
  }
  return make_result(Shape{segs, c}, std::move(out), {x}, [arg, c](Node& self) {
    if (double* dx = parent_grad(self, 0)) {
      for (std::size_t k = 0; k < arg->size(); ++k) dx[(*arg)[k] * c + k % c] += self.grad[k];
    }
  });
}

std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride,
                          std::size_t padding) {
  if (stride == 0) throw ShapeMismatch("stride must be positive");
  if (in + 2 * padding < kernel) {
    throw ShapeMismatch("kernel " + std::to_string(kernel) + " larger than padded input " +
                        std::to_string(in + 2 * padding));
  }
  return (in + 2 * padding - kernel) / stride + 1;
}

std::size_t deconv_out_size(std::size_t in, std::size_t kernel, std::size_t stride,
                            std::size_t padding) {
  if (in == 0 || stride == 0) throw ShapeMismatch("deconv: empty input or zero stride");
  const std::size_t full = (in - 1) * stride + kernel;
  if (full <= 2 * padding) throw ShapeMismatch("deconv: padding consumes the output");
  return full - 2 * padding;
}

namespace {

// Geometry of a 3D cross-correlation on a channel-first map.
struct ConvDims {
  std::size_t channels = 0;
  std::array<std::size_t, 3> in{};
  std::array<std::size_t, 3> kernel{};
  std::array<std::size_t, 3> stride{};
  std::array<std::size_t, 3> pad{};
  std::array<std::size_t, 3> out{};

  std::size_t kvol() const { return kernel[0] * kernel[1] * kernel[2]; }
  std::size_t rows() const { return channels * kvol(); }
  std::size_t in_positions() const { return in[0] * in[1] * in[2]; }
  std::size_t out_positions() const { return out[0] * out[1] * out[2]; }
};

// Keeps the im2col buffer near 32 MB.
std::size_t chunk_for(const ConvDims& d) {
  const std::size_t budget = std::size_t{1} << 22;
  const std::size_t rows = std::max<std::size_t>(d.rows(), 1);
  return std::clamp<std::size_t>(budget / rows, std::size_t{64}, std::max<std::size_t>(d.out_positions(), 64));
}

// Input coordinate origins of output positions [p0, p1).
struct PositionBases {
  std::vector<std::ptrdiff_t> b0, b1, b2;
};

PositionBases position_bases(const ConvDims& d, std::size_t p0, std::size_t p1) {
  PositionBases pb;
  const std::size_t n = p1 - p0;
  pb.b0.resize(n);
  pb.b1.resize(n);
  pb.b2.resize(n);
  for (std::size_t p = p0; p < p1; ++p) {
    const std::size_t o2 = p % d.out[2];
    const std::size_t o1 = (p / d.out[2]) % d.out[1];
    const std::size_t o0 = p / (d.out[2] * d.out[1]);
    pb.b0[p - p0] = static_cast<std::ptrdiff_t>(o0 * d.stride[0]) - static_cast<std::ptrdiff_t>(d.pad[0]);
    pb.b1[p - p0] = static_cast<std::ptrdiff_t>(o1 * d.stride[1]) - static_cast<std::ptrdiff_t>(d.pad[1]);
    pb.b2[p - p0] = static_cast<std::ptrdiff_t>(o2 * d.stride[2]) - static_cast<std::ptrdiff_t>(d.pad[2]);
  }
  return pb;
}

// col[(c, a, b, e), p - p0] = x[c, b0 + a, b1 + b, b2 + e] (zero outside).
void im2col(const double* x, const ConvDims& d, std::size_t p0, std::size_t p1, double* col) {
  const std::size_t n = p1 - p0;
  const PositionBases pb = position_bases(d, p0, p1);
  const auto in0 = static_cast<std::ptrdiff_t>(d.in[0]);
  const auto in1 = static_cast<std::ptrdiff_t>(d.in[1]);
  const auto in2 = static_cast<std::ptrdiff_t>(d.in[2]);
  std::size_t row = 0;
  for (std::size_t c = 0; c < d.channels; ++c) {
    const double* xc = x + c * d.in_positions();
    for (std::size_t a = 0; a < d.kernel[0]; ++a) {
      for (std::size_t b = 0; b < d.kernel[1]; ++b) {
        for (std::size_t e = 0; e < d.kernel[2]; ++e, ++row) {
          double* dst = col + row * n;
          for (std::size_t p = 0; p < n; ++p) {
            const std::ptrdiff_t i0 = pb.b0[p] + static_cast<std::ptrdiff_t>(a);
            const std::ptrdiff_t i1 = pb.b1[p] + static_cast<std::ptrdiff_t>(b);
            const std::ptrdiff_t i2 = pb.b2[p] + static_cast<std::ptrdiff_t>(e);
            dst[p] = (i0 >= 0 && i0 < in0 && i1 >= 0 && i1 < in1 && i2 >= 0 && i2 < in2)
                         ? xc[(i0 * in1 + i1) * in2 + i2]
                         : 0.0;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back into x.
void col2im_add(const double* col, const ConvDims& d, std::size_t p0, std::size_t p1, double* x) {
  const std::size_t n = p1 - p0;
  const PositionBases pb = position_bases(d, p0, p1);
  const auto in0 = static_cast<std::ptrdiff_t>(d.in[0]);
  const auto in1 = static_cast<std::ptrdiff_t>(d.in[1]);
  const auto in2 = static_cast<std::ptrdiff_t>(d.in[2]);
  std::size_t row = 0;
  for (std::size_t c = 0; c < d.channels; ++c) {
    double* xc = x + c * d.in_positions();
    for (std::size_t a = 0; a < d.kernel[0]; ++a) {
      for (std::size_t b = 0; b < d.kernel[1]; ++b) {
        for (std::size_t e = 0; e < d.kernel[2]; ++e, ++row) {
          const double* src = col + row * n;
          for (std::size_t p = 0; p < n; ++p) {
            const std::ptrdiff_t i0 = pb.b0[p] + static_cast<std::ptrdiff_t>(a);
            const std::ptrdiff_t i1 = pb.b1[p] + static_cast<std::ptrdiff_t>(b);
            const std::ptrdiff_t i2 = pb.b2[p] + static_cast<std::ptrdiff_t>(e);
            if (i0 >= 0 && i0 < in0 && i1 >= 0 && i1 < in1 && i2 >= 0 && i2 < in2) {
              xc[(i0 * in1 + i1) * in2 + i2] += src[p];
            }
          }
        }
      }
    }
  }
}

Tensor conv_core(const Tensor& x, const Tensor& w, const Tensor& b, const ConvDims& d,
                 std::size_t out_channels, Shape out_shape) {
  const std::size_t positions = d.out_positions();
  const std::size_t k_rows = d.rows();
  if (b.defined() && b.numel() != out_channels) throw ShapeMismatch("conv bias size mismatch");
  std::vector<double> out(out_channels * positions, 0.0);
  if (b.defined()) {
    const auto bv = b.values();
    for (std::size_t o = 0; o < out_channels; ++o) {
      std::fill_n(out.begin() + o * positions, positions, bv[o]);
    }
  }
  const std::size_t chunk = chunk_for(d);
  std::vector<double> col;
  const auto& kern = simd::kernels();
  for (std::size_t p0 = 0; p0 < positions; p0 += chunk) {
    const std::size_t p1 = std::min(positions, p0 + chunk);
    col.assign(k_rows * (p1 - p0), 0.0);
    im2col(x.values().data(), d, p0, p1, col.data());
    kern.gemm_nn(out_channels, p1 - p0, k_rows, w.values().data(), k_rows, col.data(), p1 - p0,
                 out.data() + p0, positions);
  }
  std::vector<Tensor> parents{x, w};
  if (b.defined()) parents.push_back(b);
  return make_result(std::move(out_shape), std::move(out), std::move(parents),
                     [d, out_channels, chunk](Node& self) {
                       const std::size_t positions = d.out_positions();
                       const std::size_t k_rows = d.rows();
                       const double* g = self.grad.data();
                       double* dx = parent_grad(self, 0);
                       double* dw = parent_grad(self, 1);
                       const double* xv = parent_value(self, 0).data();
                       const double* wv = parent_value(self, 1).data();
                       std::vector<double> col;
                       std::vector<double> dcol;
                       for (std::size_t p0 = 0; p0 < positions && (dx || dw); p0 += chunk) {
                         const std::size_t p1 = std::min(positions, p0 + chunk);
                         const std::size_t n = p1 - p0;
                         if (dw) {
                           col.assign(k_rows * n, 0.0);
                           im2col(xv, d, p0, p1, col.data());
                           simd::gemm_nt(out_channels, k_rows, n, g + p0, positions, col.data(), n,
                                         dw, k_rows);
                         }
                         if (dx) {
                           dcol.assign(k_rows * n, 0.0);
                           simd::gemm_tn(k_rows, n, out_channels, wv, k_rows, g + p0, positions,
                                         dcol.data(), n);
                           col2im_add(dcol.data(), d, p0, p1, dx);
                         }
                       }
                       if (self.parents.size() > 2) {
                         if (double* db = parent_grad(self, 2)) {
                           for (std::size_t o = 0; o < out_channels; ++o) {
                             double acc = 0.0;
                             for (std::size_t p = 0; p < positions; ++p) acc += g[o * positions + p];
                             db[o] += acc;
                           }
                         }
                       }
                     });
}

}  // namespace

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, const Conv3dGeometry& geom) {
  require_rank(x, 4, "conv3d input");
  require_rank(w, 5, "conv3d weight");
  if (w.dim(1) != x.dim(0)) {
    throw ShapeMismatch("conv3d: input " + shape_str(x.shape()) + " weight " +
                        shape_str(w.shape()));
  }
  ConvDims d;
  d.channels = x.dim(0);
  for (std::size_t i = 0; i < 3; ++i) {
    d.in[i] = x.dim(i + 1);
    d.kernel[i] = w.dim(i + 2);
    d.stride[i] = geom.stride[i];
    d.pad[i] = geom.padding[i];
    d.out[i] = conv_out_size(d.in[i], d.kernel[i], d.stride[i], d.pad[i]);
  }
  const std::size_t co = w.dim(0);
  return conv_core(x, w, b, d, co, Shape{co, d.out[0], d.out[1], d.out[2]});
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, const Conv2dGeometry& geom) {
  require_rank(x, 3, "conv2d input");
  require_rank(w, 4, "conv2d weight");
  if (w.dim(1) != x.dim(0)) {
    throw ShapeMismatch("conv2d: input " + shape_str(x.shape()) + " weight " +
                        shape_str(w.shape()));
  }
  ConvDims d;
  d.channels = x.dim(0);
  for (std::size_t i = 0; i < 2; ++i) {
    d.in[i] = x.dim(i + 1);
    d.kernel[i] = w.dim(i + 2);
    d.stride[i] = geom.stride[i];
    d.pad[i] = geom.padding[i];
    d.out[i] = conv_out_size(d.in[i], d.kernel[i], d.stride[i], d.pad[i]);
  }
  d.in[2] = d.kernel[2] = d.stride[2] = d.out[2] = 1;
  d.pad[2] = 0;
  const std::size_t co = w.dim(0);
  return conv_core(x, w, b, d, co, Shape{co, d.out[0], d.out[1]});
}

Tensor deconv2d(const Tensor& x, const Tensor& w, const Tensor& b, const Conv2dGeometry& geom) {
  require_rank(x, 3, "deconv2d input");
  require_rank(w, 4, "deconv2d weight");
  if (w.dim(0) != x.dim(0)) {
    throw ShapeMismatch("deconv2d: input " + shape_str(x.shape()) + " weight " +
                        shape_str(w.shape()));
  }
  const std::size_t ci = x.dim(0);
  const std::size_t co = w.dim(1);
  // The output of the transposed op is the input of the matching forward conv.
  ConvDims d;
  d.channels = co;
  for (std::size_t i = 0; i < 2; ++i) {
    d.kernel[i] = w.dim(i + 2);
    d.stride[i] = geom.stride[i];
    d.pad[i] = geom.padding[i];
    d.out[i] = x.dim(i + 1);
    d.in[i] = deconv_out_size(d.out[i], d.kernel[i], d.stride[i], d.pad[i]);
  }
  d.in[2] = d.kernel[2] = d.stride[2] = d.out[2] = 1;
  d.pad[2] = 0;
  const std::size_t hw = d.out_positions();
  const std::size_t k_rows = d.rows();
  const std::size_t out_positions = d.in_positions();
  if (b.defined() && b.numel() != co) throw ShapeMismatch("deconv2d bias size mismatch");

  std::vector<double> col(k_rows * hw, 0.0);
  simd::gemm_tn(k_rows, hw, ci, w.values().data(), k_rows, x.values().data(), hw, col.data(), hw);
  std::vector<double> out(co * out_positions, 0.0);
  col2im_add(col.data(), d, 0, hw, out.data());
  if (b.defined()) {
    const auto bv = b.values();
    for (std::size_t o = 0; o < co; ++o) {
      for (std::size_t p = 0; p < out_positions; ++p) out[o * out_positions + p] += bv[o];
    }
  }
  std::vector<Tensor> parents{x, w};
  if (b.defined()) parents.push_back(b);
  return make_result(Shape{co, d.in[0], d.in[1]}, std::move(out), std::move(parents),
                     [d, ci, co](Node& self) {
                       const std::size_t hw = d.out_positions();
                       const std::size_t k_rows = d.rows();
                       const std::size_t out_positions = d.in_positions();
                       double* dx = parent_grad(self, 0);
                       double* dw = parent_grad(self, 1);
                       if (dx || dw) {
                         std::vector<double> dcol(k_rows * hw, 0.0);
                         im2col(self.grad.data(), d, 0, hw, dcol.data());
                         if (dx) {
                           simd::kernels().gemm_nn(ci, hw, k_rows, parent_value(self, 1).data(),
                                                   k_rows, dcol.data(), hw, dx, hw);
                         }
                         if (dw) {
                           simd::gemm_nt(ci, k_rows, hw, parent_value(self, 0).data(), hw,
                                         dcol.data(), hw, dw, k_rows);
                         }
                       }
                       if (self.parents.size() > 2) {
                         if (double* db = parent_grad(self, 2)) {
                           for (std::size_t o = 0; o < co; ++o) {
                             double acc = 0.0;
                             for (std::size_t p = 0; p < out_positions; ++p) {
                               acc += self.grad[o * out_positions + p];
                             }
                             db[o] += acc;
                           }
                         }
                       }
                     });
}

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                 NormMode mode, double momentum, double eps) {
  if (x.ndim() < 1) throw ShapeMismatch("batchnorm on a scalar");
  const std::size_t c = x.dim(0);
  if (gamma.numel() != c || beta.numel() != c) throw ShapeMismatch("batchnorm: parameter size");
  if (stats.running_mean.size() != c || stats.running_var.size() != c) {
    throw ShapeMismatch("batchnorm: running stats size");
  }
  const std::size_t m = x.numel() / c;
  const auto xv = x.values();
  const auto gv = gamma.values();
  const auto bv = beta.values();

  std::vector<double> mu(c), inv_std(c);
  if (mode == NormMode::kTrain) {
    if (m < 2) throw ShapeMismatch("batchnorm train mode needs at least 2 values per channel");
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* row = xv.data() + ch * m;
      double s = 0.0;
      for (std::size_t i = 0; i < m; ++i) s += row[i];
      const double mean = s / static_cast<double>(m);
      double v = 0.0;
      for (std::size_t i = 0; i < m; ++i) v += (row[i] - mean) * (row[i] - mean);
      const double var = v / static_cast<double>(m);
      mu[ch] = mean;
      inv_std[ch] = 1.0 / std::sqrt(var + eps);
      stats.running_mean[ch] = (1.0 - momentum) * stats.running_mean[ch] + momentum * mean;
      stats.running_var[ch] = (1.0 - momentum) * stats.running_var[ch] +
                              momentum * v / static_cast<double>(m - 1);
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mu[ch] = stats.running_mean[ch];
      inv_std[ch] = 1.0 / std::sqrt(stats.running_var[ch] + eps);
    }
  }

  std::vector<double> out(x.numel());
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t k = ch * m + i;
      (*xhat)[k] = (xv[k] - mu[ch]) * inv_std[ch];
      out[k] = gv[ch] * (*xhat)[k] + bv[ch];
    }
  }
  const bool train = mode == NormMode::kTrain;
  return make_result(x.shape(), std::move(out), {x, gamma, beta},
                     [xhat, inv_std, c, m, train](Node& self) {
                       const double* g = self.grad.data();
                       const auto& gv = parent_value(self, 1);
                       double* dx = parent_grad(self, 0);
                       double* dgamma = parent_grad(self, 1);
                       double* dbeta = parent_grad(self, 2);
                       for (std::size_t ch = 0; ch < c; ++ch) {
                         double sg = 0.0;
                         double sgx = 0.0;
                         for (std::size_t i = 0; i < m; ++i) {
                           sg += g[ch * m + i];
                           sgx += g[ch * m + i] * (*xhat)[ch * m + i];
                         }
                         if (dgamma) dgamma[ch] += sgx;
                         if (dbeta) dbeta[ch] += sg;
                         if (!dx) continue;
                         const double k = gv[ch] * inv_std[ch];
                         if (train) {
                           const double mg = sg / static_cast<double>(m);
                           const double mgx = sgx / static_cast<double>(m);
                           for (std::size_t i = 0; i < m; ++i) {
                             const std::size_t idx = ch * m + i;
                             dx[idx] += k * (g[idx] - mg - (*xhat)[idx] * mgx);
                           }
                         } else {
                           for (std::size_t i = 0; i < m; ++i) dx[ch * m + i] += k * g[ch * m + i];
                         }
                       }
                     });
}

namespace {

// Winning row (or npos for an empty voxel) per (voxel, channel).
constexpr std::size_t kNoRow = std::numeric_limits<std::size_t>::max();

struct EncoderPass {
  std::vector<double> best;             // (V, C)
  std::vector<std::size_t> winner_row;  // (V, C)
};

// rows(v) gives [first, last) of voxel v's valid feature rows.
template <typename RowRange>
EncoderPass run_encoder(const double* feats, std::size_t num_voxels, RowRange rows,
                        std::size_t f, std::span<const double> w, std::span<const double> b) {
  const std::size_t c = b.size();
  EncoderPass pass;
  pass.best.assign(num_voxels * c, 0.0);
  pass.winner_row.assign(num_voxels * c, kNoRow);
  std::vector<double> act(c);
  for (std::size_t v = 0; v < num_voxels; ++v) {
    const auto [first, last] = rows(v);
    if (first == last) continue;
    double* best = pass.best.data() + v * c;
    std::size_t* win = pass.winner_row.data() + v * c;
    std::fill_n(best, c, -std::numeric_limits<double>::infinity());
    for (std::size_t r = first; r < last; ++r) {
      const double* xr = feats + r * f;
      for (std::size_t ch = 0; ch < c; ++ch) {
        double a = b[ch];
        for (std::size_t k = 0; k < f; ++k) a += w[ch * f + k] * xr[k];
        a = a > 0.0 ? a : 0.0;
        if (a > best[ch]) {
          best[ch] = a;
          win[ch] = r;
        }
      }
    }
  }
  return pass;
}

// Gradient of the encoder w.r.t. w and b (and optionally the features).
void encoder_backward(const double* feats, std::size_t f, std::span<const std::size_t> winner_row,
                      std::span<const double> w, std::span<const double> b,
                      const std::function<double(std::size_t v, std::size_t ch)>& grad_at,
                      std::size_t num_voxels, double* dw, double* db, double* dfeat) {
  const std::size_t c = b.size();
  for (std::size_t v = 0; v < num_voxels; ++v) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t r = winner_row[v * c + ch];
      if (r == kNoRow) continue;
      const double* xr = feats + r * f;
      double pre = b[ch];
      for (std::size_t k = 0; k < f; ++k) pre += w[ch * f + k] * xr[k];
      if (pre <= 0.0) continue;
      const double g = grad_at(v, ch);
      if (db) db[ch] += g;
      if (dw) {
        for (std::size_t k = 0; k < f; ++k) dw[ch * f + k] += g * xr[k];
      }
      if (dfeat) {
        for (std::size_t k = 0; k < f; ++k) dfeat[r * f + k] += g * w[ch * f + k];
      }
    }
  }
}

}  // namespace

Tensor voxel_encoder(const Tensor& dense, std::span<const std::size_t> counts, const Tensor& w,
                     const Tensor& b) {
  if (dense.ndim() < 2) throw ShapeMismatch("voxel_encoder input needs (..., P, F)");
  require_rank(w, 2, "voxel_encoder weight");
  const Shape& s = dense.shape();
  const std::size_t f = s[s.size() - 1];
  const std::size_t p = s[s.size() - 2];
  const std::size_t c = w.dim(0);
  if (w.dim(1) != f || b.numel() != c) throw ShapeMismatch("voxel_encoder parameter shapes");
  const std::size_t num_voxels = dense.numel() / (p * f);
  if (counts.size() != num_voxels) throw ShapeMismatch("voxel_encoder: one count per voxel");
  for (std::size_t n : counts) {
    if (n > p) throw ShapeMismatch("voxel_encoder: count exceeds slot capacity");
  }
  std::vector<std::size_t> cnt(counts.begin(), counts.end());
  auto rows = [&cnt, p](std::size_t v) { return std::pair{v * p, v * p + cnt[v]}; };
  EncoderPass pass = run_encoder(dense.values().data(), num_voxels, rows, f, w.values(), b.values());
  Shape out_shape(s.begin(), s.end() - 2);
  out_shape.push_back(c);
  auto winners = std::make_shared<std::vector<std::size_t>>(std::move(pass.winner_row));
  return make_result(std::move(out_shape), std::move(pass.best), {dense, w, b},
                     [winners, num_voxels, f, c](Node& self) {
                       const double* g = self.grad.data();
                       encoder_backward(
                           parent_value(self, 0).data(), f, *winners, parent_value(self, 1),
                           parent_value(self, 2),
                           [g, c](std::size_t v, std::size_t ch) { return g[v * c + ch]; },
                           num_voxels, parent_grad(self, 1), parent_grad(self, 2),
                           parent_grad(self, 0));
                     });
}

Tensor voxel_encoder_sparse(std::span<const double> features,
                            std::span<const std::size_t> voxel_offsets,
                            std::span<const std::size_t> cells, Shape out_shape, const Tensor& w,
                            const Tensor& b) {
  require_rank(w, 2, "voxel_encoder weight");
  const std::size_t c = w.dim(0);
  const std::size_t f = w.dim(1);
  if (b.numel() != c) throw ShapeMismatch("voxel_encoder bias size");
  if (out_shape.empty() || out_shape[0] != c) {
    throw ShapeMismatch("voxel_encoder_sparse: output must be channel-first with C channels");
  }
  const std::size_t num_voxels = cells.size();
  if (voxel_offsets.size() != num_voxels + 1) throw ShapeMismatch("voxel offsets size");
  if (features.size() != voxel_offsets.back() * f) throw ShapeMismatch("feature rows size");
  const std::size_t spatial = numel(out_shape) / c;
  auto offs = std::make_shared<std::vector<std::size_t>>(voxel_offsets.begin(), voxel_offsets.end());
  auto rows = [&offs](std::size_t v) { return std::pair{(*offs)[v], (*offs)[v + 1]}; };
  EncoderPass pass = run_encoder(features.data(), num_voxels, rows, f, w.values(), b.values());

  std::vector<double> out(numel(out_shape), 0.0);
  auto cell_idx = std::make_shared<std::vector<std::size_t>>(cells.begin(), cells.end());
  for (std::size_t v = 0; v < num_voxels; ++v) {
    if ((*cell_idx)[v] >= spatial) throw ShapeMismatch("voxel cell index out of range");
    for (std::size_t ch = 0; ch < c; ++ch) out[ch * spatial + (*cell_idx)[v]] = pass.best[v * c + ch];
  }
  auto feats = std::make_shared<std::vector<double>>(features.begin(), features.end());
  auto winners = std::make_shared<std::vector<std::size_t>>(std::move(pass.winner_row));
  return make_result(std::move(out_shape), std::move(out), {w, b},
                     [feats, winners, cell_idx, num_voxels, f, c, spatial](Node& self) {
                       const double* g = self.grad.data();
                       const auto& cells = *cell_idx;
                       encoder_backward(
                           feats->data(), f, *winners, parent_value(self, 0), parent_value(self, 1),
                           [g, &cells, spatial](std::size_t v, std::size_t ch) {
                             return g[ch * spatial + cells[v]];
                           },
                           num_voxels, parent_grad(self, 0), parent_grad(self, 1), nullptr);
                     });
}

}  // namespace fastpoint::nn
