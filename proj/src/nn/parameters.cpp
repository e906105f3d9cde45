// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastpoint/nn/parameters.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "fastpoint/error.hpp"

namespace fastpoint::nn {

Tensor& Parameters::add(const std::string& name, Shape shape, std::vector<double> values,
                        ParamKind kind) {
  if (index_.count(name)) throw ConfigMismatch("duplicate parameter name '" + name + "'");
  Tensor t(std::move(shape), std::move(values));
  t.set_requires_grad(kind != ParamKind::kBuffer);
  index_[name] = entries_.size();
  entries_.push_back({name, kind, t});
  return entries_.back().tensor;
}

bool Parameters::contains(const std::string& name) const { return index_.count(name) != 0; }

Tensor& Parameters::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigMismatch("unknown parameter '" + name + "'");
  return entries_[it->second].tensor;
}

const Tensor& Parameters::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigMismatch("unknown parameter '" + name + "'");
  return entries_[it->second].tensor;
}

std::size_t Parameters::total_values() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

void Parameters::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

void Parameters::copy_values_from(const Parameters& other) {
  for (auto& e : entries_) {
    if (!other.contains(e.name)) continue;
    const Tensor& src = other.get(e.name);
    if (src.shape() != e.tensor.shape()) {
      throw ConfigMismatch("shape mismatch for '" + e.name + "': " + shape_str(src.shape()) +
                           " vs " + shape_str(e.tensor.shape()));
    }
    std::copy(src.values().begin(), src.values().end(), e.tensor.values_mut().begin());
  }
}

std::vector<double> fan_in_uniform(std::size_t count, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(count);
  for (double& x : v) x = dist(rng);
  return v;
}

namespace {

constexpr char kMagic[4] = {'F', 'P', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("checkpoint truncated");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize(const Parameters& params) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.entries().size()));
  for (const auto& e : params.entries()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put<std::uint8_t>(out, static_cast<std::uint8_t>(e.kind));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.tensor.ndim()));
    for (std::size_t d : e.tensor.shape()) put<std::uint64_t>(out, d);
    for (double v : e.tensor.values()) put<double>(out, v);
  }
  return out;
}

Parameters deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.get_string(4) != std::string(kMagic, 4)) throw FormatError("not a checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  Parameters params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.get_string(r.get<std::uint32_t>());
    const auto kind = r.get<std::uint8_t>();
    if (kind > 2) throw FormatError("bad parameter kind for '" + name + "'");
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw FormatError("implausible rank for '" + name + "'");
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
    std::vector<double> values(numel(shape));
    for (double& v : values) v = r.get<double>();
    params.add(name, std::move(shape), std::move(values), static_cast<ParamKind>(kind));
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint entries");
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const Parameters& params) {
  const auto bytes = serialize(params);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("short write to " + path.string());
}

Parameters load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingCheckpoint(path.string());
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

void assign_from(Parameters& into, const Parameters& from) {
  for (const auto& e : into.entries()) {
    if (!from.contains(e.name)) throw ConfigMismatch("checkpoint lacks '" + e.name + "'");
  }
  into.copy_values_from(from);
}

}  // namespace fastpoint::nn
