#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "crossview/tensor.hpp"

namespace crossview {

/// One named tensor inside a checkpoint archive; exactly one payload vector
/// is populated, matching dtype.
struct NamedArray {
  std::string name;
  std::string dtype;  // "f32" | "f64"
  std::vector<std::int64_t> shape;
  std::vector<float> f32;
  std::vector<double> f64;
};

/// In-memory image of a checkpoint archive: epoch counter, the originating
/// config (opaque JSON), integer counters (optimizer steps), named arrays.
struct Checkpoint {
  int epoch = 0;
  std::string config_json = "{}";
  std::map<std::string, std::int64_t> counters;
  std::vector<NamedArray> arrays;

  void add(const std::string& name, const Tensor<float>& t);
  void add(const std::string& name, const Tensor<double>& t);
  const NamedArray* find(const std::string& name) const;

  /// Typed fetch; throws CheckpointError when missing or dtype-mismatched.
  template <typename T>
  Tensor<T> tensor(const std::string& name) const;
};

/// Single-file binary archive: magic, JSON header (epoch, config, counters,
/// array table), raw little-endian payload. Bit-exact round trip.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace crossview
