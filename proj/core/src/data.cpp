#include "binmp/data.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "binmp/detail/rng.hpp"

namespace binmp {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw DataError(path + ": " + what);
}

std::vector<uint8_t> read_all_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open file");
  in.seekg(0, std::ios::end);
  const auto len = static_cast<size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<uint8_t> bytes(len);
  if (len > 0) in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(len));
  if (!in) fail(path, "read failed");
  return bytes;
}

void write_all_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(path, "cannot open file for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(path, "write failed");
}

uint32_t read_be32(const std::vector<uint8_t>& b, size_t off, const std::string& path) {
  if (off + 4 > b.size()) {
    fail(path, "truncated file: need 4 bytes at offset " + std::to_string(off) +
                   ", file has " + std::to_string(b.size()));
  }
  return (uint32_t(b[off]) << 24) | (uint32_t(b[off + 1]) << 16) |
         (uint32_t(b[off + 2]) << 8) | uint32_t(b[off + 3]);
}

void append_be32(std::vector<uint8_t>& b, uint32_t v) {
  b.push_back(uint8_t(v >> 24));
  b.push_back(uint8_t(v >> 16));
  b.push_back(uint8_t(v >> 8));
  b.push_back(uint8_t(v));
}

std::string hex32(uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

double scale_pixel(uint8_t v) { return double(v) / 127.5 - 1.0; }

uint8_t unscale_pixel(double x) {
  const double v = (x + 1.0) * 127.5;
  const long r = std::lround(v);
  return uint8_t(std::min(255L, std::max(0L, r)));
}

int infer_classes(const std::vector<int>& labels) {
  int mx = 1;
  for (int v : labels) mx = std::max(mx, v + 1);
  return std::max(mx, 2);
}

}  // namespace

IdxFile read_idx_file(const std::string& path) {
  const auto bytes = read_all_bytes(path);
  IdxFile f;
  f.magic = read_be32(bytes, 0, path);
  size_t ndims;
  if (f.magic == kIdxImagesMagic) {
    ndims = 3;
  } else if (f.magic == kIdxLabelsMagic) {
    ndims = 1;
  } else {
    fail(path, "bad magic " + hex32(f.magic) + " at offset 0 (expected " +
                   hex32(kIdxImagesMagic) + " images or " + hex32(kIdxLabelsMagic) +
                   " labels)");
  }
  size_t off = 4;
  uint64_t count = 1;
  for (size_t i = 0; i < ndims; ++i, off += 4) {
    const uint32_t d = read_be32(bytes, off, path);
    if (d == 0) fail(path, "zero-sized dimension at offset " + std::to_string(off));
    f.dims.push_back(d);
    count *= d;
  }
  if (bytes.size() != off + count) {
    fail(path, (bytes.size() < off + count ? "truncated file: expected " : "trailing bytes: expected ") +
                   std::to_string(count) + " data bytes at offset " + std::to_string(off) +
                   ", file has " + std::to_string(bytes.size() - off));
  }
  f.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(off), bytes.end());
  return f;
}

void write_idx_file(const std::string& path, const IdxFile& f) {
  std::vector<uint8_t> bytes;
  bytes.reserve(4 + 4 * f.dims.size() + f.data.size());
  append_be32(bytes, f.magic);
  for (uint32_t d : f.dims) append_be32(bytes, d);
  bytes.insert(bytes.end(), f.data.begin(), f.data.end());
  write_all_bytes(path, bytes);
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 const std::string& name, int n_classes) {
  const IdxFile images = read_idx_file(images_path);
  if (images.magic != kIdxImagesMagic) {
    fail(images_path, "expected an images file (magic " + hex32(kIdxImagesMagic) + ")");
  }
  const IdxFile labels = read_idx_file(labels_path);
  if (labels.magic != kIdxLabelsMagic) {
    fail(labels_path, "expected a labels file (magic " + hex32(kIdxLabelsMagic) + ")");
  }
  const uint64_t n = images.dims[0];
  const uint64_t features = uint64_t(images.dims[1]) * images.dims[2];
  if (labels.dims[0] != n) {
    fail(labels_path, "dim mismatch: " + std::to_string(n) + " images in " + images_path +
                          " vs " + std::to_string(labels.dims[0]) + " labels");
  }

  Dataset d;
  d.name = name.empty() ? images_path : name;
  d.inputs.resize(static_cast<Eigen::Index>(features), static_cast<Eigen::Index>(n));
  for (uint64_t s = 0; s < n; ++s) {
    const uint8_t* px = images.data.data() + s * features;
    double* col = d.inputs.col(static_cast<Eigen::Index>(s)).data();
    for (uint64_t i = 0; i < features; ++i) col[i] = scale_pixel(px[i]);
  }
  d.labels.resize(n);
  for (uint64_t s = 0; s < n; ++s) d.labels[s] = labels.data[s];
  d.n_classes = n_classes > 0 ? n_classes : infer_classes(d.labels);
  for (uint64_t s = 0; s < n; ++s) {
    if (d.labels[s] < 0 || d.labels[s] >= d.n_classes) {
      fail(labels_path, "label " + std::to_string(d.labels[s]) + " at sample " +
                            std::to_string(s) + " outside [0, " +
                            std::to_string(d.n_classes) + ")");
    }
  }
  return d;
}

void save_idx(const Dataset& d, const std::string& images_path,
              const std::string& labels_path, uint32_t rows, uint32_t cols) {
  const uint64_t features = uint64_t(rows) * cols;
  if (static_cast<uint64_t>(d.n_features()) != features) {
    fail(images_path, "rows*cols = " + std::to_string(features) + " does not match " +
                          std::to_string(d.n_features()) + " features");
  }
  if (d.n_classes == 2) fail(labels_path, "two-class labels cannot round-trip to IDX bytes");
  IdxFile images;
  images.magic = kIdxImagesMagic;
  images.dims = {uint32_t(d.n_samples()), rows, cols};
  images.data.resize(size_t(d.n_samples()) * features);
  for (Eigen::Index s = 0; s < d.n_samples(); ++s) {
    const double* col = d.inputs.col(s).data();
    uint8_t* px = images.data.data() + size_t(s) * features;
    for (uint64_t i = 0; i < features; ++i) px[i] = unscale_pixel(col[i]);
  }
  write_idx_file(images_path, images);

  IdxFile labels;
  labels.magic = kIdxLabelsMagic;
  labels.dims = {uint32_t(d.n_samples())};
  labels.data.resize(d.labels.size());
  for (size_t s = 0; s < d.labels.size(); ++s) labels.data[s] = uint8_t(d.labels[s]);
  write_idx_file(labels_path, labels);
}

Dataset load_cifar10(const std::vector<std::string>& batch_paths, const std::string& name) {
  constexpr uint64_t kPixels = 3072;
  constexpr uint64_t kRecord = 1 + kPixels;
  if (batch_paths.empty()) throw DataError("load_cifar10: no batch files given");

  std::vector<std::vector<uint8_t>> batches;
  uint64_t total = 0;
  for (const auto& path : batch_paths) {
    auto bytes = read_all_bytes(path);
    if (bytes.empty() || bytes.size() % kRecord != 0) {
      fail(path, "truncated file: size " + std::to_string(bytes.size()) +
                     " is not a positive multiple of the " + std::to_string(kRecord) +
                     "-byte record (offset " + std::to_string(bytes.size() - bytes.size() % kRecord) +
                     " begins a partial record)");
    }
    total += bytes.size() / kRecord;
    batches.push_back(std::move(bytes));
  }

  Dataset d;
  d.name = name;
  d.n_classes = 10;
  d.inputs.resize(Eigen::Index(kPixels), static_cast<Eigen::Index>(total));
  d.labels.resize(total);
  Eigen::Index s = 0;
  for (size_t b = 0; b < batches.size(); ++b) {
    const auto& bytes = batches[b];
    for (size_t off = 0; off < bytes.size(); off += kRecord, ++s) {
      const uint8_t lab = bytes[off];
      if (lab > 9) {
        fail(batch_paths[b], "label " + std::to_string(lab) + " at offset " +
                                 std::to_string(off) + " outside [0, 10)");
      }
      d.labels[size_t(s)] = lab;
      const uint8_t* px = bytes.data() + off + 1;
      double* col = d.inputs.col(s).data();
      for (uint64_t i = 0; i < kPixels; ++i) col[i] = scale_pixel(px[i]);
    }
  }
  return d;
}

void save_cifar10(const Dataset& d, const std::string& path) {
  constexpr uint64_t kPixels = 3072;
  if (static_cast<uint64_t>(d.n_features()) != kPixels) {
    fail(path, "expected 3072 features, got " + std::to_string(d.n_features()));
  }
  if (d.n_classes == 2) fail(path, "two-class labels cannot round-trip to CIFAR bytes");
  std::vector<uint8_t> bytes;
  bytes.reserve(size_t(d.n_samples()) * (kPixels + 1));
  for (Eigen::Index s = 0; s < d.n_samples(); ++s) {
    bytes.push_back(uint8_t(d.labels[size_t(s)]));
    const double* col = d.inputs.col(s).data();
    for (uint64_t i = 0; i < kPixels; ++i) bytes.push_back(unscale_pixel(col[i]));
  }
  write_all_bytes(path, bytes);
}

Dataset to_two_class(const Dataset& d) {
  if (d.n_classes != 10) {
    throw DataError(d.name + ": to_two_class expects a 10-class set, got " +
                    std::to_string(d.n_classes) + " classes");
  }
  Dataset out = d;
  out.n_classes = 2;
  out.name = d.name + "-2";
  for (auto& lab : out.labels) lab = (lab % 2 == 0) ? +1 : -1;
  return out;
}

std::vector<Eigen::Index> feature_permutation(Eigen::Index n_features,
                                              int task_index, uint64_t seed) {
  std::vector<Eigen::Index> perm(static_cast<size_t>(n_features));
  for (Eigen::Index i = 0; i < n_features; ++i) perm[size_t(i)] = i;
  if (task_index == 0) return perm;
  constexpr uint64_t kTagPermute = 0x22;
  for (Eigen::Index j = n_features - 1; j > 0; --j) {
    const uint64_t w = detail::mix_stream(seed, kTagPermute, uint64_t(task_index), uint64_t(j));
    const Eigen::Index k = static_cast<Eigen::Index>(w % uint64_t(j + 1));
    std::swap(perm[size_t(j)], perm[size_t(k)]);
  }
  return perm;
}

std::vector<Dataset> permuted_tasks(const Dataset& d, int n_tasks, uint64_t seed) {
  if (n_tasks < 1) throw DataError(d.name + ": permuted_tasks needs n_tasks >= 1");
  std::vector<Dataset> tasks;
  tasks.reserve(size_t(n_tasks));
  tasks.push_back(d);
  for (int t = 1; t < n_tasks; ++t) {
    const auto perm = feature_permutation(d.n_features(), t, seed);
    Dataset task = d;
    task.name = d.name + "-task" + std::to_string(t + 1);
    task.permutation = perm;
    for (Eigen::Index i = 0; i < d.n_features(); ++i) {
      task.inputs.row(i) = d.inputs.row(perm[size_t(i)]);
    }
    tasks.push_back(std::move(task));
  }
  return tasks;
}

std::string data_root() {
  const char* env = std::getenv("BINMP_DATA_DIR");
  return (env && *env) ? env : "./data";
}

}  // namespace binmp
