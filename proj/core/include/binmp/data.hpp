#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "binmp/messages.hpp"

// Dataset ingestion and preprocessing: IDX (big-endian) and CIFAR-10 binary
// readers, symmetric [-1, 1] pixel scaling, parity-based two-class splits,
// and seeded pixel-permutation task generation.

namespace binmp {

// Structural problem in a dataset file or transform (bad magic, truncation,
// count mismatch, invalid class structure). Messages name the file and the
// byte offset where parsing failed.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Dataset {
  // One column per sample, one row per feature, values in [-1, 1].
  MatA inputs;
  // Two-class sets use {-1, +1}; multi-class sets use {0 .. n_classes-1}.
  std::vector<int> labels;
  int n_classes = 0;
  std::string name;
  // Feature map that produced this set from an unpermuted parent:
  // inputs(i, n) = parent(permutation[i], n). Empty means identity.
  std::vector<Eigen::Index> permutation;

  Eigen::Index n_samples() const { return inputs.cols(); }
  Eigen::Index n_features() const { return inputs.rows(); }
};

// Raw IDX container, kept byte-exact: read followed by write reproduces the
// input file bit for bit.
struct IdxFile {
  uint32_t magic = 0;           // 0x00000803 images, 0x00000801 labels
  std::vector<uint32_t> dims;   // big-endian words after the magic
  std::vector<uint8_t> data;    // payload bytes, row-major
};

inline constexpr uint32_t kIdxImagesMagic = 0x00000803u;
inline constexpr uint32_t kIdxLabelsMagic = 0x00000801u;

// Reads one IDX file. Throws DataError on unknown magic, truncated header
// or payload (the message names the byte offset), or zero-sized dims.
IdxFile read_idx_file(const std::string& path);
void write_idx_file(const std::string& path, const IdxFile& f);

// Combines an images file and a labels file into a Dataset. Pixels are
// scaled from [0, 255] to [-1, 1] via x / 127.5 - 1 (so an all-zero file
// maps to all -1). Throws DataError when the sample counts disagree or a
// label is outside [0, n_classes). n_classes = 0 infers max(label) + 1
// (at least 2).
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 const std::string& name = "", int n_classes = 0);

// Inverts load_idx's scaling and writes IDX files back. rows * cols must
// equal n_features (IDX image files carry a 2-D pixel grid per sample).
// Loading a file pair and saving it again reproduces the bytes exactly.
void save_idx(const Dataset& d, const std::string& images_path,
              const std::string& labels_path, uint32_t rows, uint32_t cols);

// CIFAR-10 binary batches: each record is 1 label byte followed by 3072
// pixel bytes. Multiple batch files concatenate in order. Same scaling as
// load_idx.
Dataset load_cifar10(const std::vector<std::string>& batch_paths,
                     const std::string& name = "cifar10");
// Inverse of a single-file load: writes records back byte-exactly.
void save_cifar10(const Dataset& d, const std::string& path);

// Parity split of a 10-class set: even labels map to +1, odd to -1,
// n_classes becomes 2. Throws DataError unless n_classes == 10 (so applying
// it twice fails).
Dataset to_two_class(const Dataset& d);

// The feature permutation of task `task_index` (0-based): index 0 is the
// identity; higher tasks draw independent Fisher-Yates shuffles from streams
// keyed by (seed, task_index), so train and test splits permuted with the
// same (seed, index) stay aligned.
std::vector<Eigen::Index> feature_permutation(Eigen::Index n_features,
                                              int task_index, uint64_t seed);

// n_tasks copies of d with per-task pixel permutations; the first is the
// unpermuted original.
std::vector<Dataset> permuted_tasks(const Dataset& d, int n_tasks,
                                    uint64_t seed);

// Dataset directory: $BINMP_DATA_DIR when set, "./data" otherwise.
std::string data_root();

}  // namespace binmp
