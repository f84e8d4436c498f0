#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

// Minimal tensor snapshot format, used for trained priors and resumable
// outer-loop state. Layout:
//   bytes 0..3   magic "BMPK"
//   bytes 4..7   uint32 little-endian JSON header length
//   header       {"version":1, "config_hash":"<16 hex digits>",
//                 "tensors":[{"name":..., "shape":[...], "offset":N}, ...]}
//   payload      raw little-endian float64 words; each tensor's offset is
//                its element index into the payload, data in the row-major
//                order of its shape.

namespace binmp {

struct NamedTensor {
  std::string name;
  std::vector<Eigen::Index> shape;
  std::vector<double> data;
};

struct CheckpointData {
  uint32_t version = 0;
  uint64_t config_hash = 0;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(std::string_view name) const;
};

// FNV-1a over the bytes of a string; used to fingerprint the canonical
// (serialized) run configuration inside checkpoints.
uint64_t fnv1a64(std::string_view bytes);

void save_checkpoint(const std::string& path, uint64_t config_hash,
                     const std::vector<NamedTensor>& tensors);

// Throws std::runtime_error on any structural problem (bad magic, truncated
// payload, malformed header).
CheckpointData load_checkpoint(const std::string& path);

}  // namespace binmp
