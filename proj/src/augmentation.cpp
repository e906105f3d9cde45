// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastpoint/augmentation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "fastpoint/error.hpp"
#include "fastpoint/rng.hpp"

namespace fastpoint {

Scene apply_global(const Scene& scene, const GlobalSample& s) {
  Scene out = scene;
  const double c = std::cos(s.rotation);
  const double sn = std::sin(s.rotation);
  auto move = [&](double& x, double& y, double& z) {
    if (s.flip) y = -y;
    x *= s.scale;
    y *= s.scale;
    z *= s.scale;
    const double rx = c * x - sn * y;
    const double ry = sn * x + c * y;
    x = rx;
    y = ry;
  };
  for (Point& p : out.points) move(p.x, p.y, p.z);
  for (Box3D& b : out.boxes) {
    move(b.x, b.y, b.z);
    b.l *= s.scale;
    b.w *= s.scale;
    b.h *= s.scale;
    b.theta = normalize_angle((s.flip ? -b.theta : b.theta) + s.rotation);
  }
  return out;
}

GlobalSample sample_global(const GlobalAugmentParams& params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  GlobalSample s;
  s.flip = unit(rng) < params.flip_prob;
  s.scale = params.scale_min + (params.scale_max - params.scale_min) * unit(rng);
  s.rotation = params.rotation_max * (2.0 * unit(rng) - 1.0);
  return s;
}

Scene global_augment(const Scene& scene, std::uint64_t seed, const GlobalAugmentParams& params) {
  return apply_global(scene, sample_global(params, seed));
}

namespace {

Box3D moved_box(const Box3D& b, const ObjectMove& m) {
  Box3D out = b;
  out.x += m.dx;
  out.y += m.dy;
  out.z += m.dz;
  out.theta = normalize_angle(b.theta + m.dtheta);
  return out;
}

bool collides(const Box3D& candidate, std::span<const Box3D> boxes, std::size_t self) {
  const BoxBEV c = to_bev(candidate);
  for (std::size_t j = 0; j < boxes.size(); ++j) {
    if (j != self && iou_bev(c, to_bev(boxes[j])) > 0.0) return true;
  }
  return false;
}

// Shared driver: next_move(i, attempt) yields the attempt-th candidate for gt i
// or false when none is left.
template <typename NextMove>
Scene perturb_impl(const Scene& scene, int max_tries, NextMove next_move, PerturbTrace* trace) {
  Scene out = scene;
  const std::size_t n = out.boxes.size();
  // owner[k] = gt whose interior holds point k (first match), or n.
  std::vector<std::size_t> owner(out.points.size(), n);
  for (std::size_t g = 0; g < n; ++g) {
    for (std::size_t k : points_in_box_indices(out.points, out.boxes[g])) {
      if (owner[k] == n) owner[k] = g;
    }
  }
  if (trace) {
    trace->tries.assign(n, 0);
    trace->skipped.assign(n, false);
    trace->rejections = 0;
  }
  std::vector<bool> removed(out.points.size(), false);
  for (std::size_t g = 0; g < n; ++g) {
    ObjectMove move;
    bool accepted = false;
    int attempt = 0;
    for (; attempt < max_tries; ++attempt) {
      if (!next_move(g, attempt, move)) break;
      if (!collides(moved_box(out.boxes[g], move), out.boxes, g)) {
        accepted = true;
        ++attempt;
        break;
      }
      if (trace) ++trace->rejections;
    }
    if (trace) {
      trace->tries[g] = attempt;
      trace->skipped[g] = !accepted;
    }
    if (!accepted) continue;
    const Box3D from = out.boxes[g];
    const Box3D to = moved_box(from, move);
    const double c = std::cos(move.dtheta);
    const double s = std::sin(move.dtheta);
    for (std::size_t k = 0; k < out.points.size(); ++k) {
      if (owner[k] != g) continue;
      Point& p = out.points[k];
      const double rx = p.x - from.x;
      const double ry = p.y - from.y;
      p.x = to.x + (c * rx - s * ry);
      p.y = to.y + (s * rx + c * ry);
      p.z = p.z - from.z + to.z;
    }
    for (std::size_t k : points_in_box_indices(out.points, to)) {
      if (owner[k] == n) removed[k] = true;
    }
    out.boxes[g] = to;
  }
  PointCloud kept;
  kept.reserve(out.points.size());
  for (std::size_t k = 0; k < out.points.size(); ++k) {
    if (!removed[k]) kept.push_back(out.points[k]);
  }
  out.points = std::move(kept);
  return out;
}

}  // namespace

Scene perturb_objects(const Scene& scene, std::uint64_t seed, const PerturbParams& params, PerturbTrace* trace) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> xy(0.0, params.sigma_xy);
  std::normal_distribution<double> z(0.0, params.sigma_z);
  std::uniform_real_distribution<double> rot(-params.rotation_max, params.rotation_max);
  auto next = [&](std::size_t, int, ObjectMove& m) {
    m.dx = xy(rng);
    m.dy = xy(rng);
    m.dz = z(rng);
    m.dtheta = rot(rng);
    return true;
  };
  return perturb_impl(scene, params.max_tries, next, trace);
}

Scene perturb_objects_with(const Scene& scene, std::span<const std::vector<ObjectMove>> moves, PerturbTrace* trace) {
  if (moves.size() != scene.boxes.size()) throw ShapeMismatch("one move list per gt required");
  int max_tries = 0;
  for (const auto& m : moves) max_tries = std::max(max_tries, static_cast<int>(m.size()));
  auto next = [&](std::size_t g, int attempt, ObjectMove& m) {
    if (static_cast<std::size_t>(attempt) >= moves[g].size()) return false;
    m = moves[g][static_cast<std::size_t>(attempt)];
    return true;
  };
  return perturb_impl(scene, max_tries, next, trace);
}

GtDatabase build_gt_database(std::span<const Scene> frames, double margin, std::size_t min_points) {
  GtDatabase db;
  db.margin = margin;
  for (const Scene& f : frames) {
    for (std::size_t g = 0; g < f.boxes.size(); ++g) {
      const auto cls = g < f.classes.size() ? f.classes[g] : kitti::ObjectClass::kCar;
      if (cls == kitti::ObjectClass::kDontCare) continue;
      if (count_points_in_box(f.points, f.boxes[g]) < min_points) continue;
      db.entries.push_back({cls, f.boxes[g], points_in_box(f.points, f.boxes[g], margin), f.id});
    }
  }
  return db;
}

Scene mixup_sample(const Scene& scene, const GtDatabase& db, std::size_t n_objects, std::uint64_t seed,
                   MixupTrace* trace) {
  Scene out = scene;
  if (trace) *trace = {};
  if (db.entries.empty() || n_objects == 0) return out;
  std::vector<std::size_t> order(db.entries.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  const std::size_t draws = std::min(n_objects, order.size());
  for (std::size_t i = 0; i < draws; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  order.resize(draws);

  for (std::size_t idx : order) {
    const GtEntry& e = db.entries[idx];
    Box3D context = e.box;
    context.l += 2.0 * db.margin;
    context.w += 2.0 * db.margin;
    if (collides(context, out.boxes, out.boxes.size())) {
      if (trace) trace->skipped.push_back(idx);
      continue;
    }
    const auto inside = points_in_box_indices(out.points, e.box, db.margin);
    if (!inside.empty()) {
      PointCloud kept;
      kept.reserve(out.points.size() - inside.size() + e.points.size());
      std::size_t r = 0;
      for (std::size_t k = 0; k < out.points.size(); ++k) {
        if (r < inside.size() && inside[r] == k) {
          ++r;
          continue;
        }
        kept.push_back(out.points[k]);
      }
      out.points = std::move(kept);
      if (trace) trace->removed_points += inside.size();
    }
    out.points.insert(out.points.end(), e.points.begin(), e.points.end());
    out.boxes.push_back(e.box);
    out.classes.push_back(e.cls);
    if (trace) trace->placed.push_back(idx);
  }
  return out;
}

namespace {

constexpr char kDbMagic[4] = {'F', 'P', 'G', 'D'};
constexpr std::uint32_t kDbVersion = 1;

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

struct DbReader {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;

  template <typename T>
  T get() {
    if (bytes.size() - pos < sizeof(T)) throw FormatError("gt database truncated");
    T v;
    std::memcpy(&v, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
};

}  // namespace

std::vector<std::uint8_t> encode_gt_database(const GtDatabase& db) {
  std::vector<std::uint8_t> out(kDbMagic, kDbMagic + 4);
  put<std::uint32_t>(out, kDbVersion);
  put<double>(out, db.margin);
  put<std::uint64_t>(out, db.entries.size());
  for (const auto& e : db.entries) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.cls));
    for (double v : {e.box.x, e.box.y, e.box.z, e.box.l, e.box.w, e.box.h, e.box.theta}) put<double>(out, v);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.frame_id.size()));
    out.insert(out.end(), e.frame_id.begin(), e.frame_id.end());
    put<std::uint64_t>(out, e.points.size());
    for (const Point& p : e.points) {
      for (double v : {p.x, p.y, p.z, p.r}) put<double>(out, v);
    }
  }
  return out;
}

GtDatabase decode_gt_database(std::span<const std::uint8_t> bytes) {
  DbReader rd{bytes};
  for (char m : kDbMagic) {
    if (rd.get<std::uint8_t>() != static_cast<std::uint8_t>(m)) throw FormatError("not a gt database");
  }
  if (rd.get<std::uint32_t>() != kDbVersion) throw FormatError("unsupported gt database version");
  GtDatabase db;
  db.margin = rd.get<double>();
  const auto count = rd.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    GtEntry e;
    const auto cls = rd.get<std::uint32_t>();
    if (cls > static_cast<std::uint32_t>(kitti::ObjectClass::kOther)) throw FormatError("bad class id");
    e.cls = static_cast<kitti::ObjectClass>(cls);
    for (double* v : {&e.box.x, &e.box.y, &e.box.z, &e.box.l, &e.box.w, &e.box.h, &e.box.theta}) *v = rd.get<double>();
    const auto id_len = rd.get<std::uint32_t>();
    if (bytes.size() - rd.pos < id_len) throw FormatError("gt database truncated");
    e.frame_id.assign(reinterpret_cast<const char*>(bytes.data() + rd.pos), id_len);
    rd.pos += id_len;
    const auto n = rd.get<std::uint64_t>();
    if (n > (bytes.size() - rd.pos) / 32) throw FormatError("gt database truncated");
    e.points.resize(n);
    for (Point& p : e.points) {
      p.x = rd.get<double>();
      p.y = rd.get<double>();
      p.z = rd.get<double>();
      p.r = rd.get<double>();
    }
    db.entries.push_back(std::move(e));
  }
  if (rd.pos != bytes.size()) throw FormatError("trailing bytes after gt database");
  return db;
}

void write_gt_database(const std::filesystem::path& path, const GtDatabase& db) {
  const auto bytes = encode_gt_database(db);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

GtDatabase read_gt_database(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_gt_database(bytes);
}

Scene augment_scene(const Scene& scene, const GtDatabase* db, const AugmentConfig& cfg, std::uint64_t seed) {
  Scene s = scene;
  if (cfg.mixup && db) s = mixup_sample(s, *db, cfg.mixup_objects, derive_seed(seed, 1));
  if (cfg.global) s = global_augment(s, derive_seed(seed, 2), cfg.global_params);
  if (cfg.perturb) s = perturb_objects(s, derive_seed(seed, 3), cfg.perturb_params);
  return s;
}

}  // namespace fastpoint
