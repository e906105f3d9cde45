// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

#include "fastpoint/anchors.hpp"
#include "fastpoint/augmentation.hpp"
#include "fastpoint/evalkit.hpp"
#include "fastpoint/losses.hpp"
#include "fastpoint/nn/voxelrpn.hpp"
#include "fastpoint/pipeline/dataset.hpp"
#include "fastpoint/postprocess.hpp"
#include "fastpoint/rng.hpp"
#include "fastpoint/selftest.hpp"

namespace fastpoint::selftest {

namespace {

using Clock = std::chrono::steady_clock;

std::string fmt(const char* f, double v) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

template <typename Fn>
CheckResult timed(const std::string& name, Fn&& fn) {
  const auto t0 = Clock::now();
  CheckResult r;
  try {
    r = fn();
  } catch (const std::exception& e) {
    r.pass = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.name = name;
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return r;
}

bool inside_rect(double px, double py, const BoxBEV& b) {
  const double dx = px - b.x, dy = py - b.y;
  const double c = std::cos(b.theta), s = std::sin(b.theta);
  const double u = dx * c + dy * s;
  const double v = -dx * s + dy * c;
  return std::abs(u) <= b.l / 2 && std::abs(v) <= b.w / 2;
}

double monte_carlo_iou(const BoxBEV& a, const BoxBEV& b, std::size_t samples, std::mt19937_64& rng) {
  const double ra = std::hypot(a.l, a.w) / 2, rb = std::hypot(b.l, b.w) / 2;
  const double x0 = std::min(a.x - ra, b.x - rb), x1 = std::max(a.x + ra, b.x + rb);
  const double y0 = std::min(a.y - ra, b.y - rb), y1 = std::max(a.y + ra, b.y + rb);
  std::uniform_real_distribution<double> ux(x0, x1), uy(y0, y1);
  std::size_t in_a = 0, in_b = 0, both = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double px = ux(rng), py = uy(rng);
    const bool ia = inside_rect(px, py, a), ib = inside_rect(px, py, b);
    in_a += ia;
    in_b += ib;
    both += ia && ib;
  }
  const double uni = static_cast<double>(in_a + in_b - both);
  return uni > 0 ? static_cast<double>(both) / uni : 0.0;
}

BoxBEV random_bev(std::mt19937_64& rng, double cx, double cy, double spread) {
  std::uniform_real_distribution<double> off(-spread, spread), len(0.5, 5.0), wid(0.3, 3.0), ang(-kPi, kPi);
  return {cx + off(rng), cy + off(rng), len(rng), wid(rng), normalize_angle(ang(rng))};
}

Box3D random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(-40.0, 40.0), z(-3.0, 1.0), l(0.5, 6.0), w(0.3, 3.0), h(0.5, 3.0),
      ang(-kPi, kPi);
  return {pos(rng), pos(rng), z(rng), l(rng), w(rng), h(rng), normalize_angle(ang(rng))};
}

double max_corner_gap(const CornerSet& a, const CornerSet& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < 8; ++i) {
    m = std::max({m, std::abs(a[i].x - b[i].x), std::abs(a[i].y - b[i].y), std::abs(a[i].z - b[i].z)});
  }
  return m;
}

// The same physical box with the heading turned by pi lists its corners in
// the order (k + 2) % 4 within each face.
double corner_gap_mod_pi(const CornerSet& got, const Box3D& want) {
  const CornerSet direct = box_corners(want);
  CornerSet turned;
  for (std::size_t k = 0; k < 8; ++k) turned[k] = direct[(k / 4) * 4 + (k % 4 + 2) % 4];
  return std::min(max_corner_gap(got, direct), max_corner_gap(got, turned));
}

std::vector<std::size_t> brute_force_nms(std::span<const BoxBEV> boxes, std::span<const double> scores, double thresh) {
  std::vector<bool> alive(boxes.size(), true);
  std::vector<std::size_t> kept;
  for (;;) {
    long best = -1;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (alive[i] && (best < 0 || scores[i] > scores[static_cast<std::size_t>(best)])) best = static_cast<long>(i);
    }
    if (best < 0) break;
    const auto b = static_cast<std::size_t>(best);
    kept.push_back(b);
    alive[b] = false;
    for (std::size_t j = 0; j < boxes.size(); ++j) {
      if (alive[j] && iou_bev(boxes[b], boxes[j]) > thresh) alive[j] = false;
    }
  }
  return kept;
}

}  // namespace

CheckResult geometry_oracle() {
  return timed("geometry: iou_bev vs Monte-Carlo", [] {
    std::mt19937_64 rng(20261014);
    double worst = 0.0;
    std::size_t overlapping = 0;
    for (int i = 0; i < 200; ++i) {
      const BoxBEV a = random_bev(rng, 0.0, 0.0, 2.0);
      const BoxBEV b = random_bev(rng, a.x, a.y, 2.5);
      const double exact = iou_bev(a, b);
      const double mc = monte_carlo_iou(a, b, 1000000, rng);
      worst = std::max(worst, std::abs(exact - mc));
      overlapping += exact > 0;
    }
    CheckResult r;
    r.pass = worst <= 5e-3;
    r.detail = "max |iou - mc| = " + fmt("%.2e", worst) + " over 200 pairs (" + std::to_string(overlapping) +
               " overlapping), tolerance 5e-3";
    return r;
  });
}

CheckResult roundtrips() {
  return timed("round-trips: rpn and corner encodings", [] {
    std::mt19937_64 rng(7);
    const AnchorSpec spec;
    std::uniform_int_distribution<std::size_t> pick_angle(0, spec.angles.size() - 1);
    double rpn_worst = 0.0, corner_worst = 0.0;
    std::size_t exact_heading = 0;
    for (int i = 0; i < 1000; ++i) {
      const Box3D g = random_box(rng);
      Box3D a = random_box(rng);
      a.l = spec.sizes[0].l;
      a.w = spec.sizes[0].w;
      a.h = spec.sizes[0].h;
      a.theta = spec.angles[pick_angle(rng)];
      const double d = anchor_diagonal(a.l, a.w);
      const Box3D back = decode_rpn(encode_rpn(g, a, d), a, d);
      const double lin = std::max({std::abs(back.x - g.x), std::abs(back.y - g.y), std::abs(back.z - g.z),
                                   std::abs(back.l - g.l), std::abs(back.w - g.w), std::abs(back.h - g.h)});
      const double ang = std::abs(wrap_half_pi(back.theta - g.theta));
      rpn_worst = std::max({rpn_worst, lin, ang, corner_gap_mod_pi(box_corners(back), g)});
      if (std::abs(normalize_angle(back.theta - g.theta)) <= 1e-9) ++exact_heading;

      const Box3D p = random_box(rng);
      const CornerSet c = decode_corners(encode_corners(g, p), p);
      corner_worst = std::max(corner_worst, corner_gap_mod_pi(c, g));
    }
    CheckResult r;
    r.pass = rpn_worst <= 1e-9 && corner_worst <= 1e-9;
    r.detail = "rpn max err " + fmt("%.2e", rpn_worst) + " (heading exact in " + std::to_string(exact_heading) +
               "/1000, else equal mod pi), corner max err " + fmt("%.2e", corner_worst) + ", tolerance 1e-9";
    return r;
  });
}

CheckResult loss_values() {
  return timed("loss values: hand case and smooth-L1 continuity", [] {
    LossConfig cfg;
    cfg.gamma = 10.0;
    const double pos[] = {0.5}, neg[] = {0.5};
    const double v = cls_loss(pos, neg, cfg).value;
    const double want = 11.0 * std::log(2.0);
    const double cls_err = std::abs(v - want);
    double sl1_err = 0.0;
    for (double sigma : {0.5, 1.0, 3.0, 7.0}) {
      const double c = 1.0 / (sigma * sigma);
      for (double sign : {1.0, -1.0}) {
        const double x = sign * c;
        const double below = smooth_l1(std::nextafter(x, 0.0), sigma);
        const double above = smooth_l1(std::nextafter(x, sign * 1e300), sigma);
        const double quad = 0.5 * sigma * sigma * x * x;
        const double lin = std::abs(x) - 0.5 / (sigma * sigma);
        sl1_err = std::max({sl1_err, std::abs(below - above), std::abs(smooth_l1(x, sigma) - quad),
                            std::abs(smooth_l1(x, sigma) - lin)});
      }
    }
    CheckResult r;
    r.pass = cls_err <= 1e-12 && sl1_err <= 1e-12;
    r.detail = "cls |L - 11 ln 2| = " + fmt("%.2e", cls_err) + ", smooth-L1 jump " + fmt("%.2e", sl1_err) +
               ", tolerance 1e-12";
    return r;
  });
}

CheckResult shape_contract() {
  return timed("shape contract: (704, 800, 20) grid to (200, 176) heads", [] {
    const VoxelSpec spec;
    const auto dims = spec.dims();
    const nn::NetConfig full = nn::NetConfig::reference();
    const nn::ShapePlan plan = nn::infer_shapes(full, dims);
    const nn::Shape want_cls{200, 176, 4}, want_reg{200, 176, 28};
    bool ok = dims == std::array<std::size_t, 3>{704, 800, 20} && plan.cls_map == want_cls && plan.reg_map == want_reg;

    nn::NetConfig tiny = full.scaled(1.0 / 64.0);
    tiny.encoder_channels = 2;
    nn::VoxelRpn net(tiny, dims, 3);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ux(0.0, 70.4), uy(-40.0, 40.0), uz(-3.0, 1.0), ur(0.0, 1.0);
    PointCloud pts;
    for (int i = 0; i < 2000; ++i) pts.push_back({ux(rng), uy(rng), uz(rng), ur(rng)});
    const VoxelGrid grid = voxelize(pts, spec, 1);
    nn::NoGradGuard no_grad;
    const nn::RpnOutput out = net.forward(grid, nn::NormMode::kEval);
    ok = ok && out.cls.shape() == want_cls && out.reg.shape() == want_reg;
    CheckResult r;
    r.pass = ok;
    r.detail = "grid " + nn::shape_str({dims[0], dims[1], dims[2]}) + ", static cls " + nn::shape_str(plan.cls_map) +
               " reg " + nn::shape_str(plan.reg_map) + " fused " + nn::shape_str(plan.fused) + ", forward cls " +
               nn::shape_str(out.cls.shape()) + " reg " + nn::shape_str(out.reg.shape());
    return r;
  });
}

CheckResult nms_ap_oracles() {
  return timed("nms and average precision oracles", [] {
    std::mt19937_64 rng(99);
    std::size_t nms_mismatch = 0, nms_sets = 0;
    std::uniform_real_distribution<double> pos(0.0, 20.0), len(2.0, 5.0), wid(1.0, 2.5), ang(-kPi, kPi), sc(0.0, 1.0);
    for (double thresh : {0.0, 0.1, 0.3, 0.5, 0.7}) {
      for (int set = 0; set < 20; ++set) {
        std::vector<BoxBEV> boxes;
        std::vector<double> scores;
        for (int i = 0; i < 100; ++i) {
          boxes.push_back({pos(rng), pos(rng), len(rng), wid(rng), normalize_angle(ang(rng))});
          // Coarse scores so ties occur.
          scores.push_back(std::round(sc(rng) * 20.0) / 20.0);
        }
        nms_mismatch += nms_rotated(boxes, scores, thresh) != brute_force_nms(boxes, scores, thresh);
        ++nms_sets;
      }
    }

    const bool tp1[] = {true}, fp1[] = {false};
    const double r11 = eval::average_precision(tp1, fp1, 2, eval::ApMode::kR11);
    const bool r11_ok = r11 == 6.0 / 11.0;

    // Three frames. Frame a: two cars, one found, one false alarm far away.
    // Frame b: one car found twice (the duplicate is a false positive).
    // Frame c: one car found, one detection on a DontCare region (ignored).
    auto car = [](double x, double y) { return Box3D{x, y, -1.0, 3.9, 1.6, 1.56, 0.0}; };
    auto label = [](const Box3D& b, kitti::ObjectClass cls) {
      kitti::FrameLabel l;
      l.cls = cls;
      l.box = b;
      l.difficulty = kitti::Difficulty::kEasy;
      return l;
    };
    auto det = [](const Box3D& b, double s) {
      Detection d;
      d.box = b;
      d.score = s;
      return d;
    };
    eval::LabelsById gts{
        {"a", {label(car(10, 0), kitti::ObjectClass::kCar), label(car(20, 5), kitti::ObjectClass::kCar)}},
        {"b", {label(car(15, -3), kitti::ObjectClass::kCar)}},
        {"c", {label(car(8, 2), kitti::ObjectClass::kCar), label(car(30, 0), kitti::ObjectClass::kDontCare)}},
    };
    eval::DetectionsById dets{
        {"a", {det(car(10, 0), 0.9), det(car(40, 10), 0.6)}},
        {"b", {det(car(15, -3), 0.8), det(car(15.1, -3), 0.7)}},
        {"c", {det(car(8, 2), 0.5), det(car(30, 0), 0.4)}},
    };
    const eval::EvalCell cell{eval::Metric::k3D, 0.7, kitti::Difficulty::kModerate, {}, kitti::ObjectClass::kCar};
    const auto res = eval::evaluate(dets, gts, std::span<const eval::EvalCell>(&cell, 1), eval::ApMode::kR11);
    // Score order: TP, TP, FP, FP, TP; four evaluated gts.
    const std::vector<std::pair<double, double>> want_curve{
        {1.0 / 1.0, 1.0 / 4.0}, {2.0 / 2.0, 2.0 / 4.0}, {2.0 / 3.0, 2.0 / 4.0}, {2.0 / 4.0, 2.0 / 4.0},
        {3.0 / 5.0, 3.0 / 4.0}};
    const double interp[11] = {1, 1, 1, 1, 1, 1, 3.0 / 5.0, 3.0 / 5.0, 0, 0, 0};
    double want_ap = 0.0;
    for (double v : interp) want_ap += v;
    want_ap /= 11.0;
    bool curve_ok = res.size() == 1 && res[0].curve.size() == want_curve.size() && res[0].n_gt == 4 &&
                    res[0].tp == 3 && res[0].fp == 2;
    for (std::size_t i = 0; curve_ok && i < want_curve.size(); ++i) {
      curve_ok = res[0].curve[i].precision == want_curve[i].first && res[0].curve[i].recall == want_curve[i].second;
    }
    const bool ap_ok = curve_ok && res[0].ap == want_ap;

    CheckResult r;
    r.pass = nms_mismatch == 0 && r11_ok && ap_ok;
    r.detail = "nms mismatches " + std::to_string(nms_mismatch) + "/" + std::to_string(nms_sets) +
               ", R11 single-det case " + fmt("%.17g", r11) + (r11_ok ? " == 6/11" : " != 6/11") +
               ", three-frame AP " + (res.empty() ? std::string("-") : fmt("%.17g", res[0].ap)) +
               (ap_ok ? " matches" : " differs from") + " hand curve";
    return r;
  });
}

CheckResult augmentation_audit() {
  return timed("augmentation audit: 1000 seeded scenes", [] {
    pipeline::SyntheticConfig syn;
    syn.min_objects = 3;
    syn.max_objects = 10;
    syn.surface_density = 10.0;
    syn.ground_points = 300;
    syn.clutter_points = 100;
    syn.min_points = 10;
    const VoxelSpec world;
    std::vector<Scene> pool;
    for (std::uint64_t i = 0; i < 20; ++i) pool.push_back(pipeline::generate_scene(syn, world.range, derive_seed(1, i)));
    const GtDatabase db = build_gt_database(pool);
    AugmentConfig cfg;
    cfg.mixup_objects = 10;
    std::size_t overlaps = 0, count_changes = 0, boxes_checked = 0, placed = 0;
    for (std::uint64_t s = 0; s < 1000; ++s) {
      const Scene base = pipeline::generate_scene(syn, world.range, derive_seed(2, s));
      const Scene out = augment_scene(base, &db, cfg, s);
      placed += out.boxes.size();
      for (std::size_t i = 0; i < out.boxes.size(); ++i) {
        for (std::size_t j = i + 1; j < out.boxes.size(); ++j) {
          overlaps += iou_bev(to_bev(out.boxes[i]), to_bev(out.boxes[j])) > 0.0;
        }
      }
      const Scene g = apply_global(base, sample_global(cfg.global_params, derive_seed(s, 99)));
      for (std::size_t i = 0; i < base.boxes.size(); ++i) {
        count_changes += count_points_in_box(base.points, base.boxes[i]) != count_points_in_box(g.points, g.boxes[i]);
        ++boxes_checked;
      }
    }
    CheckResult r;
    r.pass = overlaps == 0 && count_changes == 0;
    r.detail = std::to_string(overlaps) + " overlapping gt pairs among " + std::to_string(placed) + " boxes, " +
               std::to_string(count_changes) + "/" + std::to_string(boxes_checked) +
               " interior counts changed by global transforms";
    return r;
  });
}

std::vector<CheckResult> run_all() {
  return {geometry_oracle(), roundtrips(), loss_values(), gradient_suite(), shape_contract(), nms_ap_oracles(),
          augmentation_audit()};
}

}  // namespace fastpoint::selftest
