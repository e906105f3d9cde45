// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastpoint/kitti.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "fastpoint/error.hpp"

namespace fastpoint::kitti {

namespace {

Mat3 rotation_part(const Mat34& m) { return {m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]}; }

Vec3 mul(const Mat3& m, const Vec3& p) {
  return {m[0] * p.x + m[1] * p.y + m[2] * p.z, m[3] * p.x + m[4] * p.y + m[5] * p.z,
          m[6] * p.x + m[7] * p.y + m[8] * p.z};
}

Mat3 inverse(const Mat3& m) {
  const double a = m[0], b = m[1], c = m[2];
  const double d = m[3], e = m[4], f = m[5];
  const double g = m[6], h = m[7], i = m[8];
  const double co0 = e * i - f * h;
  const double co1 = -(d * i - f * g);
  const double co2 = d * h - e * g;
  const double det = a * co0 + b * co1 + c * co2;
  if (std::fabs(det) < 1e-12) throw MalformedCalibration("singular rotation block");
  const double inv = 1.0 / det;
  return {co0 * inv,
          -(b * i - c * h) * inv,
          (b * f - c * e) * inv,
          co1 * inv,
          (a * i - c * g) * inv,
          -(a * f - c * d) * inv,
          co2 * inv,
          -(a * h - b * g) * inv,
          (a * e - b * d) * inv};
}

void check_orthonormal(const Mat3& r, std::string_view name) {
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += r[3 * i + k] * r[3 * j + k];
      const double expected = i == j ? 1.0 : 0.0;
      if (std::fabs(acc - expected) > 1e-4) {
        throw MalformedCalibration(std::string(name) + " rotation is not orthonormal");
      }
    }
  }
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

bool parse_double(std::string_view token, double& out) {
  // std::from_chars for double is available in libstdc++ 11.
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

std::string fmt_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  // Avoid printing "-0.000000".
  if (std::strspn(buf, "-0.") == std::strlen(buf) && buf[0] == '-') return std::string(buf + 1);
  return buf;
}

}  // namespace

Vec3 Calibration::lidar_to_rect(const Vec3& p) const {
  const Vec3 cam = mul(rotation_part(tr_velo_to_cam), p);
  const Vec3 moved{cam.x + tr_velo_to_cam[3], cam.y + tr_velo_to_cam[7], cam.z + tr_velo_to_cam[11]};
  return mul(r0_rect, moved);
}

Vec3 Calibration::rect_to_lidar(const Vec3& p) const {
  const Vec3 cam = mul(inverse(r0_rect), p);
  const Vec3 shifted{cam.x - tr_velo_to_cam[3], cam.y - tr_velo_to_cam[7],
                     cam.z - tr_velo_to_cam[11]};
  return mul(inverse(rotation_part(tr_velo_to_cam)), shifted);
}

Vec2 Calibration::project_rect(const Vec3& p) const {
  const double u = p2[0] * p.x + p2[1] * p.y + p2[2] * p.z + p2[3];
  const double v = p2[4] * p.x + p2[5] * p.y + p2[6] * p.z + p2[7];
  const double w = p2[8] * p.x + p2[9] * p.y + p2[10] * p.z + p2[11];
  return {u / w, v / w};
}

Calibration Calibration::identity() { return Calibration{}; }

Calibration Calibration::synthetic_rig() {
  Calibration c;
  c.tr_velo_to_cam = {0, -1, 0, 0.0, 0, 0, -1, -0.08, 1, 0, 0, -0.27};
  c.p2 = {721.5377, 0, 609.5593, 44.85728, 0, 721.5377, 172.854, 0.2163791, 0, 0, 1, 0.002745884};
  return c;
}

void validate(const Calibration& calib) {
  check_orthonormal(calib.r0_rect, "R0_rect");
  check_orthonormal(rotation_part(calib.tr_velo_to_cam), "Tr_velo_to_cam");
}

Calibration parse_calibration(std::string_view text) {
  Calibration calib;
  bool have_r0 = false, have_tr = false, have_p2 = false;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    const std::string key = line.substr(0, colon);
    const auto tokens = split_ws(std::string_view(line).substr(colon + 1));
    std::vector<double> values;
    for (const auto tok : tokens) {
      double v = 0.0;
      if (!parse_double(tok, v)) throw MalformedCalibration("bad number in key " + key);
      values.push_back(v);
    }
    auto take = [&](auto& dst, bool& flag) {
      if (values.size() != dst.size()) {
        throw MalformedCalibration("key " + key + " expects " + std::to_string(dst.size()) +
                                   " values");
      }
      std::copy(values.begin(), values.end(), dst.begin());
      flag = true;
    };
    if (key == "R0_rect" || key == "R_rect") take(calib.r0_rect, have_r0);
    else if (key == "Tr_velo_to_cam" || key == "Tr_velo_cam") take(calib.tr_velo_to_cam, have_tr);
    else if (key == "P2") take(calib.p2, have_p2);
  }
  if (!have_r0 || !have_tr || !have_p2) {
    throw MalformedCalibration("missing one of R0_rect, Tr_velo_to_cam, P2");
  }
  validate(calib);
  return calib;
}

Calibration read_calibration(const std::filesystem::path& path) {
  return parse_calibration(read_text_file(path));
}

std::string format_calibration(const Calibration& calib) {
  auto row = [](std::string_view key, std::span<const double> values) {
    std::string s(key);
    s += ":";
    char buf[40];
    for (double v : values) {
      std::snprintf(buf, sizeof(buf), " %.12e", v);
      s += buf;
    }
    s += "\n";
    return s;
  };
  const std::array<double, 12> zeros34{};
  const std::array<double, 12> p0{calib.p2[0], calib.p2[1], calib.p2[2], 0,
                                  calib.p2[4], calib.p2[5], calib.p2[6], 0,
                                  calib.p2[8], calib.p2[9], calib.p2[10], 0};
  std::string out;
  out += row("P0", p0);
  out += row("P1", p0);
  out += row("P2", calib.p2);
  out += row("P3", p0);
  out += row("R0_rect", calib.r0_rect);
  out += row("Tr_velo_to_cam", calib.tr_velo_to_cam);
  out += row("Tr_imu_to_velo", zeros34);
  return out;
}

std::string_view class_name(ObjectClass cls) {
  switch (cls) {
    case ObjectClass::kCar:
      return "Car";
    case ObjectClass::kPedestrian:
      return "Pedestrian";
    case ObjectClass::kCyclist:
      return "Cyclist";
    case ObjectClass::kDontCare:
      return "DontCare";
    case ObjectClass::kOther:
      return "Other";
  }
  return "Other";
}

ObjectClass class_from_name(std::string_view name) {
  if (name == "Car") return ObjectClass::kCar;
  if (name == "Pedestrian") return ObjectClass::kPedestrian;
  if (name == "Cyclist") return ObjectClass::kCyclist;
  if (name == "DontCare") return ObjectClass::kDontCare;
  return ObjectClass::kOther;
}

std::string_view difficulty_name(Difficulty d) {
  switch (d) {
    case Difficulty::kEasy:
      return "easy";
    case Difficulty::kModerate:
      return "moderate";
    case Difficulty::kHard:
      return "hard";
    case Difficulty::kIgnored:
      return "ignored";
  }
  return "ignored";
}

Difficulty classify_difficulty(double bbox_height_px, int occlusion, double truncation,
                               const DifficultyThresholds& t) {
  for (int level = 0; level < 3; ++level) {
    if (bbox_height_px >= t.min_height_px[level] && occlusion <= t.max_occlusion[level] &&
        truncation <= t.max_truncation[level]) {
      return static_cast<Difficulty>(level);
    }
  }
  return Difficulty::kIgnored;
}

double observation_angle(const Box3D& box, const Calibration& calib) {
  const Vec3 c = calib.lidar_to_rect({box.x, box.y, box.z});
  const double ry = normalize_angle(-box.theta - kPi / 2.0);
  return normalize_angle(ry - std::atan2(c.x, c.z));
}

FrameLabel parse_label_line(std::string_view line, const Calibration& calib,
                            const DifficultyThresholds& thresholds) {
  const auto tok = split_ws(line);
  if (tok.size() != 15 && tok.size() != 16) {
    throw MalformedLabel("expected 15 fields (16 with score), got " + std::to_string(tok.size()));
  }
  std::array<double, 15> v{};
  for (std::size_t i = 1; i < tok.size(); ++i) {
    if (!parse_double(tok[i], v[i - 1])) {
      throw MalformedLabel("unparseable number '" + std::string(tok[i]) + "'");
    }
  }
  FrameLabel label;
  label.type_name = std::string(tok[0]);
  label.cls = class_from_name(tok[0]);
  label.truncation = v[0];
  label.occlusion = static_cast<int>(std::lround(v[1]));
  label.alpha = v[2];
  label.bbox2d = {v[3], v[4], v[5], v[6]};
  const double h = v[7], w = v[8], l = v[9];
  const Vec3 bottom_rect{v[10], v[11], v[12]};
  const double ry = v[13];
  if (tok.size() == 16) label.score = v[14];

  const Vec3 bottom = calib.rect_to_lidar(bottom_rect);
  label.box = {bottom.x, bottom.y, bottom.z + 0.5 * h, l, w, h, normalize_angle(-ry - kPi / 2.0)};

  if (label.cls == ObjectClass::kDontCare) {
    label.difficulty = Difficulty::kIgnored;
  } else {
    if (!(l > 0.0 && w > 0.0 && h > 0.0)) throw MalformedLabel("non-positive box dimensions");
    label.difficulty = classify_difficulty(label.bbox2d[3] - label.bbox2d[1], label.occlusion,
                                           label.truncation, thresholds);
  }
  return label;
}

std::string format_label_line(const FrameLabel& label, const Calibration& calib) {
  const Box3D& b = label.box;
  const Vec3 bottom = calib.lidar_to_rect({b.x, b.y, b.z - 0.5 * b.h});
  const double ry = normalize_angle(-b.theta - kPi / 2.0);
  std::string s = label.type_name;
  auto add = [&s](double v, int decimals) {
    s += ' ';
    s += fmt_fixed(v, decimals);
  };
  add(label.truncation, 2);
  s += ' ';
  s += std::to_string(label.occlusion);
  add(label.alpha, 6);
  for (double c : label.bbox2d) add(c, 2);
  add(b.h, 6);
  add(b.w, 6);
  add(b.l, 6);
  add(bottom.x, 6);
  add(bottom.y, 6);
  add(bottom.z, 6);
  add(ry, 6);
  if (label.score) add(*label.score, 6);
  return s;
}

std::vector<FrameLabel> parse_labels(std::string_view text, const Calibration& calib,
                                     const DifficultyThresholds& thresholds) {
  std::vector<FrameLabel> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (split_ws(line).empty()) continue;
    out.push_back(parse_label_line(line, calib, thresholds));
  }
  return out;
}

std::vector<FrameLabel> read_labels(const std::filesystem::path& path, const Calibration& calib,
                                    const DifficultyThresholds& thresholds) {
  return parse_labels(read_text_file(path), calib, thresholds);
}

void write_labels(const std::filesystem::path& path, std::span<const FrameLabel> labels,
                  const Calibration& calib) {
  std::string text;
  for (const FrameLabel& l : labels) {
    text += format_label_line(l, calib);
    text += '\n';
  }
  write_text_file(path, text);
}

namespace {

std::uint32_t load_le32(const std::byte* p) {
  std::uint32_t v = 0;
  std::memcpy(&v, p, 4);
  if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap32(v);
  return v;
}

void store_le32(std::uint32_t v, std::byte* p) {
  if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap32(v);
  std::memcpy(p, &v, 4);
}

}  // namespace

PointCloud decode_velodyne(std::span<const std::byte> bytes) {
  if (bytes.size() % 16 != 0) {
    throw TruncatedFile("velodyne payload of " + std::to_string(bytes.size()) +
                        " bytes is not a multiple of 16");
  }
  PointCloud pc(bytes.size() / 16);
  for (std::size_t i = 0; i < pc.size(); ++i) {
    float f[4];
    for (int k = 0; k < 4; ++k) {
      const std::uint32_t bits = load_le32(bytes.data() + 16 * i + 4 * k);
      f[k] = std::bit_cast<float>(bits);
    }
    pc[i] = {f[0], f[1], f[2], f[3]};
  }
  return pc;
}

std::vector<std::byte> encode_velodyne(std::span<const Point> points) {
  std::vector<std::byte> out(points.size() * 16);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const float f[4] = {static_cast<float>(points[i].x), static_cast<float>(points[i].y),
                        static_cast<float>(points[i].z), static_cast<float>(points[i].r)};
    for (int k = 0; k < 4; ++k) store_le32(std::bit_cast<std::uint32_t>(f[k]), out.data() + 16 * i + 4 * k);
  }
  return out;
}

PointCloud read_velodyne(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for " + path.string());
  return decode_velodyne(std::as_bytes(std::span<const char>(raw)));
}

void write_velodyne(const std::filesystem::path& path, std::span<const Point> points) {
  const auto bytes = encode_velodyne(points);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

PointCloud crop_to_range(std::span<const Point> points, const CropRange& range) {
  PointCloud out;
  out.reserve(points.size());
  for (const Point& p : points) {
    if (range.contains(p)) out.push_back(p);
  }
  return out;
}

std::vector<std::string> read_frame_ids(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    const auto tok = split_ws(line);
    if (!tok.empty()) ids.emplace_back(tok[0]);
  }
  return ids;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::array<double, 4> project_box_2d(const Box3D& box, const Calibration& calib) {
  std::array<double, 4> out{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                            -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const Vec3& c : box_corners(box)) {
    Vec3 r = calib.lidar_to_rect(c);
    r.z = std::max(r.z, 0.1);
    const Vec2 uv = calib.project_rect(r);
    out[0] = std::min(out[0], uv.x);
    out[1] = std::min(out[1], uv.y);
    out[2] = std::max(out[2], uv.x);
    out[3] = std::max(out[3], uv.y);
  }
  return out;
}

}  // namespace fastpoint::kitti
