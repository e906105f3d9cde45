// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>

#include "fastpoint/losses.hpp"
#include "fastpoint/nn/ops.hpp"
#include "fastpoint/nn/refinernet.hpp"
#include "fastpoint/selftest.hpp"

namespace fastpoint::selftest {

namespace {

using nn::Shape;
using nn::Tensor;
using Rng = std::mt19937_64;

constexpr double kStep = 1e-5;
constexpr double kTolerance = 1e-4;
constexpr int kInstances = 100;
// Gradients smaller than this are compared on an absolute scale.
constexpr double kFloor = 1e-6;

double rel_err(double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), kFloor}); }

std::vector<double> normal(std::size_t n, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

// Values kept at least `gap` away from every point in `kinks`.
std::vector<double> away_from(std::size_t n, Rng& rng, std::initializer_list<double> kinks, double gap = 1e-3) {
  std::vector<double> v = normal(n, rng);
  for (double& x : v) {
    for (double k : kinks) {
      if (std::abs(x - k) < gap) x = k + (x < k ? -gap : gap) * 2;
    }
  }
  return v;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); }

Tensor param(Shape s, std::vector<double> v) { return Tensor::parameter(std::move(s), std::move(v)); }

using Build = std::function<Tensor(const std::vector<Tensor>&)>;

// Worst relative error between backward and central differences of
// L = sum_i r_i * out_i over every coordinate of every input.
double check(std::vector<Tensor> inputs, const Build& f, Rng& rng) {
  Tensor out = f(inputs);
  const Tensor r(out.shape(), normal(out.numel(), rng));
  for (auto& t : inputs) t.zero_grad();
  nn::backward(nn::sum(nn::mul(out, r)));
  const auto rv = r.values();
  auto objective = [&] {
    nn::NoGradGuard g;
    const Tensor o = f(inputs);
    const auto ov = o.values();
    return std::inner_product(ov.begin(), ov.end(), rv.begin(), 0.0);
  };
  double worst = 0.0;
  for (auto& t : inputs) {
    if (!t.requires_grad()) continue;
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    auto v = t.values_mut();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double keep = v[i];
      v[i] = keep + kStep;
      const double lp = objective();
      v[i] = keep - kStep;
      const double lm = objective();
      v[i] = keep;
      const double a = analytic.empty() ? 0.0 : analytic[i];
      worst = std::max(worst, rel_err(a, (lp - lm) / (2 * kStep)));
    }
  }
  return worst;
}

struct Case {
  std::string name;
  std::function<double(Rng&)> run;  // one random instance, returns its worst error
};

std::vector<Case> cases() {
  std::vector<Case> c;
  c.push_back({"add", [](Rng& g) {
                 const Shape s{pick(g, 1, 4), pick(g, 1, 5)};
                 return check({param(s, normal(nn::numel(s), g)), param(s, normal(nn::numel(s), g))},
                              [](auto& in) { return nn::add(in[0], in[1]); }, g);
               }});
  c.push_back({"sub", [](Rng& g) {
                 const Shape s{pick(g, 1, 4), pick(g, 1, 5)};
                 return check({param(s, normal(nn::numel(s), g)), param(s, normal(nn::numel(s), g))},
                              [](auto& in) { return nn::sub(in[0], in[1]); }, g);
               }});
  c.push_back({"mul", [](Rng& g) {
                 const Shape s{pick(g, 1, 4), pick(g, 1, 5)};
                 return check({param(s, normal(nn::numel(s), g)), param(s, normal(nn::numel(s), g))},
                              [](auto& in) { return nn::mul(in[0], in[1]); }, g);
               }});
  c.push_back({"scale", [](Rng& g) {
                 const Shape s{pick(g, 1, 6)};
                 const double k = normal(1, g)[0];
                 return check({param(s, normal(nn::numel(s), g))}, [k](auto& in) { return nn::scale(in[0], k); }, g);
               }});
  c.push_back({"relu", [](Rng& g) {
                 const Shape s{pick(g, 1, 4), pick(g, 1, 5)};
                 return check({param(s, away_from(nn::numel(s), g, {0.0}))}, [](auto& in) { return nn::relu(in[0]); },
                              g);
               }});
  c.push_back({"sigmoid", [](Rng& g) {
                 const Shape s{pick(g, 1, 4), pick(g, 1, 5)};
                 return check({param(s, normal(nn::numel(s), g, 3.0))}, [](auto& in) { return nn::sigmoid(in[0]); }, g);
               }});
  c.push_back({"sum", [](Rng& g) {
                 const Shape s{pick(g, 1, 4), pick(g, 1, 5)};
                 return check({param(s, normal(nn::numel(s), g))}, [](auto& in) { return nn::sum(in[0]); }, g);
               }});
  c.push_back({"mean", [](Rng& g) {
                 const Shape s{pick(g, 1, 4), pick(g, 1, 5)};
                 return check({param(s, normal(nn::numel(s), g))}, [](auto& in) { return nn::mean(in[0]); }, g);
               }});
  c.push_back({"reshape", [](Rng& g) {
                 const std::size_t a = pick(g, 1, 4), b = pick(g, 1, 4);
                 return check({param({a, b}, normal(a * b, g))}, [a, b](auto& in) { return nn::reshape(in[0], {b, a}); },
                              g);
               }});
  c.push_back({"permute", [](Rng& g) {
                 const Shape s{pick(g, 1, 3), pick(g, 1, 3), pick(g, 1, 3)};
                 std::vector<std::size_t> axes{0, 1, 2};
                 std::shuffle(axes.begin(), axes.end(), g);
                 return check({param(s, normal(nn::numel(s), g))}, [axes](auto& in) { return nn::permute(in[0], axes); },
                              g);
               }});
  c.push_back({"concat", [](Rng& g) {
                 const std::size_t axis = pick(g, 0, 1);
                 Shape s1{pick(g, 1, 3), pick(g, 1, 3)}, s2 = s1;
                 s2[axis] = pick(g, 1, 3);
                 return check({param(s1, normal(nn::numel(s1), g)), param(s2, normal(nn::numel(s2), g))},
                              [axis](auto& in) {
                                const std::array<Tensor, 2> parts{in[0], in[1]};
                                return nn::concat(parts, axis);
                              },
                              g);
               }});
  c.push_back({"index_rows", [](Rng& g) {
                 const std::size_t n = pick(g, 1, 5), ch = pick(g, 1, 3);
                 std::vector<std::size_t> rows(pick(g, 1, 7));
                 for (auto& r : rows) r = pick(g, 0, n - 1);
                 return check({param({n, ch}, normal(n * ch, g))}, [rows](auto& in) { return nn::index_rows(in[0], rows); },
                              g);
               }});
  c.push_back({"linear", [](Rng& g) {
                 const std::size_t n = pick(g, 1, 5), i = pick(g, 1, 5), o = pick(g, 1, 5);
                 return check({param({n, i}, normal(n * i, g)), param({o, i}, normal(o * i, g)), param({o}, normal(o, g))},
                              [](auto& in) { return nn::linear(in[0], in[1], in[2]); }, g);
               }});
  c.push_back({"mul_rows", [](Rng& g) {
                 const std::size_t n = pick(g, 1, 5), ch = pick(g, 1, 4);
                 return check({param({n, ch}, normal(n * ch, g)), param({n, 1}, normal(n, g))},
                              [](auto& in) { return nn::mul_rows(in[0], in[1]); }, g);
               }});
  c.push_back({"segment_max", [](Rng& g) {
                 const std::size_t segs = pick(g, 1, 4), ch = pick(g, 1, 3);
                 std::vector<std::size_t> off{0};
                 for (std::size_t s = 0; s < segs; ++s) off.push_back(off.back() + pick(g, 1, 4));
                 // Distinct values so the maximum is unique under the step.
                 std::vector<double> v(off.back() * ch);
                 std::iota(v.begin(), v.end(), 0.0);
                 std::shuffle(v.begin(), v.end(), g);
                 for (double& x : v) x *= 0.1;
                 return check({param({off.back(), ch}, v)}, [off](auto& in) { return nn::segment_max(in[0], off); }, g);
               }});
  c.push_back({"conv3d", [](Rng& g) {
                 const std::size_t ci = pick(g, 1, 2), co = pick(g, 1, 3);
                 const std::array<std::size_t, 3> k{pick(g, 1, 3), pick(g, 1, 3), pick(g, 1, 3)};
                 nn::Conv3dGeometry geom;
                 for (int a = 0; a < 3; ++a) {
                   geom.stride[a] = pick(g, 1, 2);
                   geom.padding[a] = pick(g, 0, k[a] / 2 + (k[a] > 1 ? 1 : 0));
                 }
                 const Shape xs{ci, pick(g, 3, 5), pick(g, 3, 5), pick(g, 3, 4)};
                 const bool bias = pick(g, 0, 1) == 1;
                 std::vector<Tensor> in{param(xs, normal(nn::numel(xs), g)),
                                        param({co, ci, k[0], k[1], k[2]}, normal(co * ci * k[0] * k[1] * k[2], g))};
                 if (bias) in.push_back(param({co}, normal(co, g)));
                 return check(in,
                              [geom, bias](auto& t) { return nn::conv3d(t[0], t[1], bias ? t[2] : Tensor(), geom); }, g);
               }});
  c.push_back({"conv2d", [](Rng& g) {
                 const std::size_t ci = pick(g, 1, 3), co = pick(g, 1, 3), kh = pick(g, 1, 3), kw = pick(g, 1, 3);
                 nn::Conv2dGeometry geom{{pick(g, 1, 2), pick(g, 1, 2)}, {pick(g, 0, 1), pick(g, 0, 1)}};
                 const Shape xs{ci, pick(g, 3, 6), pick(g, 3, 6)};
                 return check({param(xs, normal(nn::numel(xs), g)), param({co, ci, kh, kw}, normal(co * ci * kh * kw, g)),
                               param({co}, normal(co, g))},
                              [geom](auto& t) { return nn::conv2d(t[0], t[1], t[2], geom); }, g);
               }});
  c.push_back({"deconv2d", [](Rng& g) {
                 const std::size_t ci = pick(g, 1, 3), co = pick(g, 1, 3), k = pick(g, 1, 4);
                 const std::size_t s = pick(g, 1, std::min<std::size_t>(k, 3));
                 nn::Conv2dGeometry geom{{s, s}, {0, 0}};
                 const Shape xs{ci, pick(g, 2, 4), pick(g, 2, 4)};
                 return check({param(xs, normal(nn::numel(xs), g)), param({ci, co, k, k}, normal(ci * co * k * k, g)),
                               param({co}, normal(co, g))},
                              [geom](auto& t) { return nn::deconv2d(t[0], t[1], t[2], geom); }, g);
               }});
  for (auto mode : {nn::NormMode::kTrain, nn::NormMode::kEval}) {
    c.push_back({mode == nn::NormMode::kTrain ? "batchnorm (train)" : "batchnorm (eval)", [mode](Rng& g) {
                   const std::size_t ch = pick(g, 1, 3), m = pick(g, 2, 6);
                   nn::BatchNormStats st{normal(ch, g), std::vector<double>(ch, 0.0)};
                   for (std::size_t i = 0; i < ch; ++i) st.running_var[i] = 0.5 + std::abs(normal(1, g)[0]);
                   return check({param({ch, m}, normal(ch * m, g)), param({ch}, normal(ch, g)), param({ch}, normal(ch, g))},
                                [mode, st](auto& t) mutable { return nn::batchnorm(t[0], t[1], t[2], st, mode); }, g);
                 }});
  }
  c.push_back({"voxel_encoder", [](Rng& g) {
                 const std::size_t v = pick(g, 1, 4), p = pick(g, 1, 4), f = pick(g, 1, 4), ch = pick(g, 1, 3);
                 std::vector<std::size_t> counts(v);
                 for (auto& n : counts) n = pick(g, 0, p);
                 // Distinct inputs keep the masked maximum unique.
                 std::vector<double> dense = normal(v * p * f, g);
                 return check({param({v, p, f}, dense), param({ch, f}, normal(ch * f, g)), param({ch}, normal(ch, g, 0.1))},
                              [counts](auto& t) { return nn::voxel_encoder(t[0], counts, t[1], t[2]); }, g);
               }});
  c.push_back({"voxel_encoder_sparse", [](Rng& g) {
                 const std::size_t cells = pick(g, 2, 6), f = pick(g, 1, 4), ch = pick(g, 1, 3);
                 std::vector<std::size_t> all(cells);
                 std::iota(all.begin(), all.end(), 0);
                 std::shuffle(all.begin(), all.end(), g);
                 std::vector<std::size_t> occupied(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(pick(g, 1, cells)));
                 std::sort(occupied.begin(), occupied.end());
                 std::vector<std::size_t> off{0};
                 for (std::size_t i = 0; i < occupied.size(); ++i) off.push_back(off.back() + pick(g, 1, 3));
                 const std::vector<double> feats = normal(off.back() * f, g);
                 return check({param({ch, f}, normal(ch * f, g)), param({ch}, normal(ch, g, 0.1))},
                              [feats, off, occupied, cells, ch](auto& t) {
                                return nn::voxel_encoder_sparse(feats, off, occupied, {ch, cells}, t[0], t[1]);
                              },
                              g);
               }});
  c.push_back({"cls_loss_op", [](Rng& g) {
                 const std::size_t n = pick(g, 2, 12);
                 std::uniform_real_distribution<double> up(0.02, 0.98);
                 std::vector<double> p(n);
                 for (double& x : p) x = up(g);
                 std::vector<std::size_t> idx(n);
                 std::iota(idx.begin(), idx.end(), 0);
                 std::shuffle(idx.begin(), idx.end(), g);
                 const std::size_t npos = pick(g, 0, n - 1);
                 std::vector<std::size_t> pos(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(npos));
                 std::vector<std::size_t> neg(idx.begin() + static_cast<std::ptrdiff_t>(npos), idx.end());
                 LossConfig cfg;
                 cfg.ohem_keep = pick(g, 1, n);
                 return check({param({n}, p)}, [pos, neg, cfg](auto& t) { return cls_loss_op(t[0], pos, neg, cfg); }, g);
               }});
  c.push_back({"reg_loss_op", [](Rng& g) {
                 const std::size_t anchors = pick(g, 1, 6);
                 const double sigma = 3.0, kink = 1.0 / (sigma * sigma);
                 std::vector<std::size_t> pos;
                 for (std::size_t a = 0; a < anchors; ++a) {
                   if (pick(g, 0, 1) || pos.empty()) pos.push_back(a);
                 }
                 const std::vector<double> pred = normal(anchors * 7, g, 0.3);
                 std::vector<RpnDelta> targets(pos.size());
                 const std::vector<double> diff = away_from(pos.size() * 7, g, {-kink, kink});
                 for (std::size_t k = 0; k < pos.size(); ++k) {
                   for (int j = 0; j < 7; ++j) targets[k][j] = pred[pos[k] * 7 + j] - 0.3 * diff[k * 7 + j];
                 }
                 // Residuals scaled by 0.3 stay off the transition only if rescaled kinks are avoided too.
                 for (std::size_t k = 0; k < pos.size(); ++k) {
                   for (int j = 0; j < 7; ++j) {
                     const double r = pred[pos[k] * 7 + j] - targets[k][j];
                     if (std::abs(std::abs(r) - kink) < 1e-3) targets[k][j] -= 3e-3;
                   }
                 }
                 return check({param({anchors * 7}, pred)},
                              [pos, targets, sigma](auto& t) { return reg_loss_op(t[0], pos, targets, sigma); }, g);
               }});
  c.push_back({"corner_loss_op", [](Rng& g) {
                 const std::size_t rows = pick(g, 1, 4);
                 const double sigma = 3.0, kink = 1.0 / (sigma * sigma);
                 const std::vector<double> pred = normal(rows * 24, g, 0.3);
                 std::vector<CornerTarget> targets(rows);
                 for (std::size_t r = 0; r < rows; ++r) {
                   for (int j = 0; j < 24; ++j) {
                     double t = pred[r * 24 + j] - 0.3 * normal(1, g)[0];
                     const double res = pred[r * 24 + j] - t;
                     if (std::abs(std::abs(res) - kink) < 1e-3 || std::abs(res) < 1e-3) t -= 3e-3;
                     targets[r][j] = t;
                   }
                 }
                 return check({param({rows, 24}, pred)},
                              [targets, sigma](auto& t) { return corner_loss_op(t[0], targets, sigma); }, g);
               }});
  c.push_back({"refinernet (tiny)", [](Rng& g) {
                 nn::RefinerConfig cfg;
                 cfg.feature_channels = 3;
                 cfg.coord_channels = 2;
                 cfg.pointnet = {4, 5};
                 cfg.head = {4};
                 const auto modes = {nn::AttentionMode::kChannel, nn::AttentionMode::kScalar, nn::AttentionMode::kNone};
                 cfg.attention = *(modes.begin() + static_cast<std::ptrdiff_t>(pick(g, 0, 2)));
                 nn::RefinerNet net(cfg, g());
                 std::vector<BoxFeature> boxes(pick(g, 1, 3));
                 for (auto& b : boxes) {
                   b.proposal = {0, 0, 0, 4, 2, 1.5, normal(1, g)[0]};
                   b.channels = 3;
                   const std::size_t n = pick(g, 1, 4);
                   for (std::size_t i = 0; i < n; ++i) {
                     const auto v = normal(3, g);
                     b.coords.push_back({v[0], v[1], v[2]});
                   }
                   b.features = normal(n * 3, g);
                 }
                 std::vector<Tensor> in;
                 for (auto& e : net.params().entries()) {
                   for (double& v : e.tensor.values_mut()) v = normal(1, g)[0] * 0.5;
                   in.push_back(e.tensor);
                 }
                 return check(in, [&net, boxes](auto&) { return net.forward(boxes); }, g);
               }});
  return c;
}

// Plain-form analytic gradients of the losses against differences of the
// plain values.
double plain_loss_instance(Rng& g) {
  double worst = 0.0;
  std::uniform_real_distribution<double> up(0.02, 0.98);
  const double p = up(g);
  for (int t : {0, 1}) {
    const double n = (bce(p + kStep, t) - bce(p - kStep, t)) / (2 * kStep);
    worst = std::max(worst, rel_err(bce_grad(p, t), n));
  }
  const double sigma = 0.5 + 3.0 * up(g);
  const double x = away_from(1, g, {-1.0 / (sigma * sigma), 0.0, 1.0 / (sigma * sigma)})[0];
  worst = std::max(worst, rel_err(smooth_l1_grad(x, sigma),
                                  (smooth_l1(x + kStep, sigma) - smooth_l1(x - kStep, sigma)) / (2 * kStep)));

  const std::size_t np = pick(g, 0, 4), nn_ = pick(g, 1, 8);
  std::vector<double> pos(np), neg(nn_);
  for (double& v : pos) v = up(g);
  for (double& v : neg) v = up(g);
  LossConfig cfg;
  cfg.ohem_keep = pick(g, 1, nn_);
  const ClsLoss cl = cls_loss(pos, neg, cfg);
  for (auto* vec : {&pos, &neg}) {
    const auto& grad = vec == &pos ? cl.grad_pos : cl.grad_neg;
    for (std::size_t i = 0; i < vec->size(); ++i) {
      const double keep = (*vec)[i];
      (*vec)[i] = keep + kStep;
      const double lp = cls_loss(pos, neg, cfg).value;
      (*vec)[i] = keep - kStep;
      const double lm = cls_loss(pos, neg, cfg).value;
      (*vec)[i] = keep;
      worst = std::max(worst, rel_err(grad[i], (lp - lm) / (2 * kStep)));
    }
  }

  const double s3 = 3.0, kink = 1.0 / 9.0;
  std::vector<RpnDelta> pred(pick(g, 1, 3)), target(pred.size());
  for (std::size_t k = 0; k < pred.size(); ++k) {
    for (int j = 0; j < 7; ++j) {
      pred[k][j] = normal(1, g)[0];
      target[k][j] = pred[k][j] - away_from(1, g, {-kink, 0.0, kink})[0];
    }
  }
  std::vector<RpnDelta> rg;
  reg_loss_rpn(pred, target, s3, &rg);
  for (std::size_t k = 0; k < pred.size(); ++k) {
    for (int j = 0; j < 7; ++j) {
      const double keep = pred[k][j];
      pred[k][j] = keep + kStep;
      const double lp = reg_loss_rpn(pred, target, s3);
      pred[k][j] = keep - kStep;
      const double lm = reg_loss_rpn(pred, target, s3);
      pred[k][j] = keep;
      worst = std::max(worst, rel_err(rg[k][j], (lp - lm) / (2 * kStep)));
    }
  }

  CornerTarget cp, ct, cg;
  for (int j = 0; j < 24; ++j) {
    cp[j] = normal(1, g)[0];
    ct[j] = cp[j] - away_from(1, g, {-kink, 0.0, kink})[0];
  }
  corner_loss(cp, ct, s3, &cg);
  for (int j = 0; j < 24; ++j) {
    const double keep = cp[j];
    cp[j] = keep + kStep;
    const double lp = corner_loss(cp, ct, s3);
    cp[j] = keep - kStep;
    const double lm = corner_loss(cp, ct, s3);
    cp[j] = keep;
    worst = std::max(worst, rel_err(cg[j], (lp - lm) / (2 * kStep)));
  }
  return worst;
}

}  // namespace

CheckResult gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r;
  try {
    auto all = cases();
    all.push_back({"plain loss gradients", plain_loss_instance});
    double worst_all = 0.0;
    std::string worst_name;
    std::vector<std::string> failing;
    Rng rng(4242);
    for (const Case& c : all) {
      double worst = 0.0;
      for (int i = 0; i < kInstances; ++i) worst = std::max(worst, c.run(rng));
      if (worst > worst_all) {
        worst_all = worst;
        worst_name = c.name;
      }
      if (!(worst <= kTolerance)) failing.push_back(c.name);
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu ops x %d instances, max rel err %.2e (%s), tolerance 1e-4", all.size(),
                  kInstances, worst_all, worst_name.c_str());
    r.detail = buf;
    for (const auto& f : failing) r.detail += "; FAIL " + f;
    r.pass = failing.empty();
  } catch (const std::exception& e) {
    r.pass = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.name = "gradients: central differences";
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace fastpoint::selftest
