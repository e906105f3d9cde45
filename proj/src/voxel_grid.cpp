// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastpoint/voxel_grid.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_map>

#include "fastpoint/error.hpp"
#include "fastpoint/rng.hpp"

namespace fastpoint {

namespace {

const std::array<const AxisRange*, 3> axes_of(const CropRange& r) { return {&r.x, &r.y, &r.z}; }

}  // namespace

void VoxelSpec::validate() const {
  if (max_points_per_voxel == 0) throw ConfigMismatch("max_points_per_voxel must be >= 1");
  const auto axes = axes_of(range);
  for (std::size_t a = 0; a < 3; ++a) {
    const double extent = axes[a]->extent();
    if (!(voxel_size[a] > 0.0) || !(extent > 0.0)) {
      throw ConfigMismatch("voxel size and range extent must be positive");
    }
    const double cells = extent / voxel_size[a];
    if (std::abs(cells - std::round(cells)) > 1e-6) {
      throw ConfigMismatch("extent " + std::to_string(extent) + " is not a multiple of voxel size " +
                           std::to_string(voxel_size[a]));
    }
  }
}

std::array<std::size_t, 3> VoxelSpec::dims() const {
  validate();
  const auto axes = axes_of(range);
  std::array<std::size_t, 3> d{};
  for (std::size_t a = 0; a < 3; ++a) {
    d[a] = static_cast<std::size_t>(std::llround(axes[a]->extent() / voxel_size[a]));
  }
  return d;
}

const Voxel* VoxelGrid::find(const VoxelIndex& idx) const {
  const std::size_t key = flat(idx);
  auto it = std::lower_bound(voxels.begin(), voxels.end(), key,
                             [this](const Voxel& v, std::size_t k) { return flat(v.index) < k; });
  return (it != voxels.end() && flat(it->index) == key) ? &*it : nullptr;
}

std::size_t VoxelGrid::total_points() const {
  std::size_t n = 0;
  for (const auto& v : voxels) n += v.total_count;
  return n;
}

std::array<double, 3> VoxelGrid::voxel_center(const VoxelIndex& idx) const {
  const auto axes = axes_of(spec.range);
  std::array<double, 3> c{};
  for (std::size_t a = 0; a < 3; ++a) {
    c[a] = axes[a]->min + (static_cast<double>(idx[a]) + 0.5) * spec.voxel_size[a];
  }
  return c;
}

namespace {

VoxelIndex index_in(const VoxelSpec& spec, const std::array<std::size_t, 3>& dims, const Point& p) {
  if (!spec.range.contains(p)) {
    throw PointOutOfRange("point (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ", " +
                          std::to_string(p.z) + ") outside voxel range");
  }
  const auto axes = axes_of(spec.range);
  const std::array<double, 3> coord{p.x, p.y, p.z};
  VoxelIndex idx{};
  for (std::size_t a = 0; a < 3; ++a) {
    const double f = std::floor((coord[a] - axes[a]->min) / spec.voxel_size[a]);
    // A coordinate just below max can round up to n.
    idx[a] = std::min(static_cast<std::size_t>(std::max(f, 0.0)), dims[a] - 1);
  }
  return idx;
}

}  // namespace

VoxelIndex voxel_index(const VoxelSpec& spec, const Point& p) { return index_in(spec, spec.dims(), p); }

VoxelGrid voxelize(std::span<const Point> points, const VoxelSpec& spec, std::uint64_t seed) {
  VoxelGrid grid;
  grid.spec = spec;
  grid.dims = spec.dims();

  std::unordered_map<std::size_t, std::size_t> slot_of;
  std::vector<std::vector<std::size_t>> members;
  std::vector<VoxelIndex> indices;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const VoxelIndex idx = index_in(spec, grid.dims, points[i]);
    const std::size_t key = grid.flat(idx);
    auto [it, inserted] = slot_of.try_emplace(key, members.size());
    if (inserted) {
      members.emplace_back();
      indices.push_back(idx);
    }
    members[it->second].push_back(i);
  }

  std::vector<std::size_t> order(members.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return grid.flat(indices[a]) < grid.flat(indices[b]);
  });

  const std::size_t cap = spec.max_points_per_voxel;
  grid.voxels.reserve(order.size());
  for (std::size_t slot : order) {
    std::vector<std::size_t>& m = members[slot];
    Voxel v;
    v.index = indices[slot];
    v.total_count = m.size();
    if (m.size() > cap) {
      std::mt19937_64 rng(derive_seed(seed, grid.flat(v.index)));
      // Partial Fisher-Yates, then restore input order among the chosen.
      for (std::size_t i = 0; i < cap; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, m.size() - 1);
        std::swap(m[i], m[pick(rng)]);
      }
      m.resize(cap);
      std::sort(m.begin(), m.end());
    }
    const auto center = grid.voxel_center(v.index);
    v.points.reserve(m.size());
    for (std::size_t i : m) {
      const Point& p = points[i];
      v.points.push_back({p.x - center[0], p.y - center[1], p.z - center[2], p.r});
    }
    grid.voxels.push_back(std::move(v));
  }
  return grid;
}

nn::Tensor to_dense(const VoxelGrid& grid) {
  const std::size_t cap = grid.spec.max_points_per_voxel;
  nn::Tensor dense(nn::Shape{grid.dims[0], grid.dims[1], grid.dims[2], cap, 4}, 0.0);
  auto values = dense.values_mut();
  for (const auto& v : grid.voxels) {
    double* base = values.data() + grid.flat(v.index) * cap * 4;
    for (std::size_t s = 0; s < v.points.size(); ++s) {
      base[s * 4 + 0] = v.points[s].x;
      base[s * 4 + 1] = v.points[s].y;
      base[s * 4 + 2] = v.points[s].z;
      base[s * 4 + 3] = v.points[s].r;
    }
  }
  return dense;
}

std::vector<std::size_t> dense_counts(const VoxelGrid& grid) {
  std::vector<std::size_t> counts(grid.dims[0] * grid.dims[1] * grid.dims[2], 0);
  for (const auto& v : grid.voxels) counts[grid.flat(v.index)] = v.points.size();
  return counts;
}

VoxelGrid from_dense(const nn::Tensor& dense, const VoxelSpec& spec) {
  VoxelGrid grid;
  grid.spec = spec;
  grid.dims = spec.dims();
  const std::size_t cap = spec.max_points_per_voxel;
  const nn::Shape expect{grid.dims[0], grid.dims[1], grid.dims[2], cap, 4};
  if (dense.shape() != expect) {
    throw ShapeMismatch("dense grid " + nn::shape_str(dense.shape()) + ", expected " +
                        nn::shape_str(expect));
  }
  const auto values = dense.values();
  const std::size_t cells = grid.dims[0] * grid.dims[1] * grid.dims[2];
  for (std::size_t c = 0; c < cells; ++c) {
    const double* base = values.data() + c * cap * 4;
    std::size_t stored = 0;
    for (std::size_t s = 0; s < cap; ++s) {
      for (std::size_t f = 0; f < 4; ++f) {
        if (base[s * 4 + f] != 0.0) stored = s + 1;
      }
    }
    if (stored == 0) continue;
    Voxel v;
    v.index = {c / (grid.dims[1] * grid.dims[2]), (c / grid.dims[2]) % grid.dims[1], c % grid.dims[2]};
    v.total_count = stored;
    for (std::size_t s = 0; s < stored; ++s) {
      v.points.push_back({base[s * 4], base[s * 4 + 1], base[s * 4 + 2], base[s * 4 + 3]});
    }
    grid.voxels.push_back(std::move(v));
  }
  return grid;
}

namespace {

constexpr char kGridMagic[4] = {'F', 'P', 'V', 'X'};
constexpr std::uint32_t kGridVersion = 1;

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

struct ByteReader {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;

  template <typename T>
  T get() {
    if (bytes.size() - pos < sizeof(T)) throw FormatError("voxel grid dump truncated");
    T v;
    std::memcpy(&v, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
};

}  // namespace

std::vector<std::uint8_t> encode_grid(const VoxelGrid& grid) {
  std::vector<std::uint8_t> out(kGridMagic, kGridMagic + 4);
  put<std::uint32_t>(out, kGridVersion);
  for (std::size_t d : grid.dims) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  const CropRange& r = grid.spec.range;
  for (double v : {r.x.min, r.x.max, r.y.min, r.y.max, r.z.min, r.z.max}) put<double>(out, v);
  for (double v : grid.spec.voxel_size) put<double>(out, v);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(grid.spec.max_points_per_voxel));
  put<std::uint64_t>(out, grid.voxels.size());
  for (const auto& v : grid.voxels) {
    for (std::size_t i : v.index) put<std::uint32_t>(out, static_cast<std::uint32_t>(i));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(v.total_count));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(v.points.size()));
    for (const Point& p : v.points) {
      put<double>(out, p.x);
      put<double>(out, p.y);
      put<double>(out, p.z);
      put<double>(out, p.r);
    }
  }
  return out;
}

VoxelGrid decode_grid(std::span<const std::uint8_t> bytes) {
  ByteReader rd{bytes};
  char magic[4];
  for (char& c : magic) c = static_cast<char>(rd.get<std::uint8_t>());
  if (std::memcmp(magic, kGridMagic, 4) != 0) throw FormatError("not a voxel grid dump");
  if (rd.get<std::uint32_t>() != kGridVersion) throw FormatError("unsupported voxel grid version");
  VoxelGrid grid;
  for (std::size_t& d : grid.dims) d = rd.get<std::uint32_t>();
  CropRange& r = grid.spec.range;
  for (double* v : {&r.x.min, &r.x.max, &r.y.min, &r.y.max, &r.z.min, &r.z.max}) *v = rd.get<double>();
  for (double& v : grid.spec.voxel_size) v = rd.get<double>();
  grid.spec.max_points_per_voxel = rd.get<std::uint32_t>();
  if (grid.spec.dims() != grid.dims) throw FormatError("voxel grid dims disagree with spec");
  const auto count = rd.get<std::uint64_t>();
  for (std::uint64_t n = 0; n < count; ++n) {
    Voxel v;
    for (std::size_t a = 0; a < 3; ++a) {
      v.index[a] = rd.get<std::uint32_t>();
      if (v.index[a] >= grid.dims[a]) throw FormatError("voxel index out of range");
    }
    v.total_count = rd.get<std::uint32_t>();
    const auto stored = rd.get<std::uint32_t>();
    if (stored > grid.spec.max_points_per_voxel || stored > v.total_count) {
      throw FormatError("stored point count exceeds cap");
    }
    for (std::uint32_t s = 0; s < stored; ++s) {
      Point p;
      p.x = rd.get<double>();
      p.y = rd.get<double>();
      p.z = rd.get<double>();
      p.r = rd.get<double>();
      v.points.push_back(p);
    }
    if (!grid.voxels.empty() && grid.flat(grid.voxels.back().index) >= grid.flat(v.index)) {
      throw FormatError("voxel records not in ascending order");
    }
    grid.voxels.push_back(std::move(v));
  }
  if (rd.pos != bytes.size()) throw FormatError("trailing bytes after voxel records");
  return grid;
}

void write_grid(const std::filesystem::path& path, const VoxelGrid& grid) {
  const auto bytes = encode_grid(grid);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

VoxelGrid read_grid(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_grid(bytes);
}

}  // namespace fastpoint
