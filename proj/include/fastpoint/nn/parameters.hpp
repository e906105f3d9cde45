// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

/// \file
/// Named parameter collections, seeded initialization and the checkpoint
/// container.
///
/// Checkpoint layout (little-endian):
///   char[4]  "FPCK"
///   u32      version (1)
///   u32      entry count
///   per entry:
///     u32    name length, then the name bytes (UTF-8, no terminator)
///     u8     kind (0 weight, 1 no-decay parameter, 2 buffer)
///     u32    rank, then rank x u64 dims
///     f64    values, row-major

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "fastpoint/nn/tensor.hpp"

namespace fastpoint::nn {

enum class ParamKind : std::uint8_t {
  kWeight = 0,   ///< trainable, weight-decayed
  kNoDecay = 1,  ///< trainable, excluded from weight decay (biases, norm affine)
  kBuffer = 2,   ///< not trainable (running statistics)
};

struct ParamEntry {
  std::string name;
  ParamKind kind = ParamKind::kWeight;
  Tensor tensor;
};

class Parameters {
 public:
  /// Registers a new tensor. Throws ConfigMismatch on duplicate names.
  Tensor& add(const std::string& name, Shape shape, std::vector<double> values, ParamKind kind);

  bool contains(const std::string& name) const;
  /// Throws ConfigMismatch for unknown names.
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;

  std::vector<ParamEntry>& entries() { return entries_; }
  const std::vector<ParamEntry>& entries() const { return entries_; }

  std::size_t total_values() const;
  void zero_grad();

  /// Copies values from `other` for every shared name; shapes must match.
  void copy_values_from(const Parameters& other);

 private:
  std::vector<ParamEntry> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) values.
std::vector<double> fan_in_uniform(std::size_t count, std::size_t fan_in, std::mt19937_64& rng);

std::vector<std::uint8_t> serialize(const Parameters& params);
/// Rebuilds a collection from bytes. Throws FormatError on a bad container.
Parameters deserialize(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Parameters& params);
/// Throws MissingCheckpoint when the file does not exist.
Parameters load_checkpoint(const std::filesystem::path& path);

/// Overwrites values of `into` from a loaded checkpoint. Names and shapes of
/// `into` must all be present in `from`; throws ConfigMismatch otherwise.
void assign_from(Parameters& into, const Parameters& from);

}  // namespace fastpoint::nn
