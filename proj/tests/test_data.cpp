#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "binmp/data.hpp"
#include "doctest.h"

using namespace binmp;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static fs::path dir = [] {
    auto d = fs::temp_directory_path() / "binmp_data_tests";
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::vector<uint8_t> file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in),
                              std::istreambuf_iterator<char>());
}

void put_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  REQUIRE(bool(out));
  out.write(reinterpret_cast<const char*>(bytes.data()),
            std::streamsize(bytes.size()));
}

void be32(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back(uint8_t(x >> 24));
  v.push_back(uint8_t(x >> 16));
  v.push_back(uint8_t(x >> 8));
  v.push_back(uint8_t(x));
}

// Synthetic 4-sample 2x2 image file + labels file with easily spotted bytes.
struct TinyIdx {
  std::string images, labels;
  std::vector<uint8_t> image_bytes, label_bytes;
};

TinyIdx make_tiny_idx(const std::string& stem) {
  TinyIdx t;
  t.images = (temp_dir() / (stem + "-images")).string();
  t.labels = (temp_dir() / (stem + "-labels")).string();
  be32(t.image_bytes, 0x00000803u);
  be32(t.image_bytes, 4);  // samples
  be32(t.image_bytes, 2);  // rows
  be32(t.image_bytes, 2);  // cols
  for (int s = 0; s < 4; ++s) {
    for (int i = 0; i < 4; ++i) t.image_bytes.push_back(uint8_t(s * 60 + i * 5));
  }
  be32(t.label_bytes, 0x00000801u);
  be32(t.label_bytes, 4);
  for (uint8_t lab : {0, 7, 3, 9}) t.label_bytes.push_back(lab);
  put_bytes(t.images, t.image_bytes);
  put_bytes(t.labels, t.label_bytes);
  return t;
}

std::string mnist_dir() {
  const char* env = std::getenv("BINMP_DATA_DIR");
  const std::string root = (env && *env) ? env : "./data";
  return root + "/mnist";
}

bool have_mnist() { return fs::exists(mnist_dir() + "/train-labels-idx1-ubyte"); }

}  // namespace

TEST_CASE("idx reader round-trips bytes exactly") {
  const auto t = make_tiny_idx("roundtrip");
  const IdxFile f = read_idx_file(t.images);
  CHECK(f.magic == kIdxImagesMagic);
  REQUIRE(f.dims == std::vector<uint32_t>{4, 2, 2});
  REQUIRE(f.data.size() == 16);
  CHECK(f.data[0] == 0);
  CHECK(f.data[5] == 65);

  const std::string copy = (temp_dir() / "roundtrip-copy").string();
  write_idx_file(copy, f);
  CHECK(file_bytes(copy) == t.image_bytes);

  const IdxFile lf = read_idx_file(t.labels);
  CHECK(lf.magic == kIdxLabelsMagic);
  REQUIRE(lf.dims == std::vector<uint32_t>{4});
  CHECK(lf.data == std::vector<uint8_t>{0, 7, 3, 9});
}

TEST_CASE("load_idx scales pixels to [-1, 1] and keeps labels") {
  const auto t = make_tiny_idx("load");
  const Dataset d = load_idx(t.images, t.labels, "tiny", 10);
  CHECK(d.n_samples() == 4);
  CHECK(d.n_features() == 4);
  CHECK(d.n_classes == 10);
  CHECK(d.name == "tiny");
  CHECK(d.labels == std::vector<int>{0, 7, 3, 9});
  // byte 0 -> -1 exactly; byte b -> b/127.5 - 1.
  CHECK(d.inputs(0, 0) == -1.0);
  CHECK(d.inputs(1, 0) == doctest::Approx(5.0 / 127.5 - 1.0).epsilon(1e-15));
  CHECK(d.inputs(3, 3) == doctest::Approx(195.0 / 127.5 - 1.0).epsilon(1e-15));
  CHECK(d.inputs.array().abs().maxCoeff() <= 1.0);
}

TEST_CASE("all-zero image file maps to all -1") {
  std::vector<uint8_t> img, lab;
  be32(img, 0x00000803u);
  be32(img, 2);
  be32(img, 1);
  be32(img, 3);
  img.insert(img.end(), 6, 0);
  be32(lab, 0x00000801u);
  be32(lab, 2);
  lab.push_back(1);
  lab.push_back(2);
  const auto ip = (temp_dir() / "zeros-images").string();
  const auto lp = (temp_dir() / "zeros-labels").string();
  put_bytes(ip, img);
  put_bytes(lp, lab);
  const Dataset d = load_idx(ip, lp);
  CHECK((d.inputs.array() == -1.0).all());
}

TEST_CASE("idx errors are structured and name offsets") {
  const auto t = make_tiny_idx("errors");

  SUBCASE("bad magic") {
    auto bytes = t.image_bytes;
    bytes[3] = 0x02;
    const auto p = (temp_dir() / "badmagic").string();
    put_bytes(p, bytes);
    CHECK_THROWS_WITH_AS(read_idx_file(p),
                         doctest::Contains("bad magic 0x00000802 at offset 0"),
                         DataError);
  }
  SUBCASE("truncated payload") {
    auto bytes = t.image_bytes;
    bytes.resize(bytes.size() - 3);
    const auto p = (temp_dir() / "truncated").string();
    put_bytes(p, bytes);
    CHECK_THROWS_WITH_AS(read_idx_file(p),
                         doctest::Contains("expected 16 data bytes at offset 16"),
                         DataError);
  }
  SUBCASE("truncated header") {
    std::vector<uint8_t> bytes;
    be32(bytes, 0x00000803u);
    be32(bytes, 4);
    const auto p = (temp_dir() / "shortheader").string();
    put_bytes(p, bytes);
    CHECK_THROWS_WITH_AS(read_idx_file(p),
                         doctest::Contains("need 4 bytes at offset 8"), DataError);
  }
  SUBCASE("zero dimension") {
    std::vector<uint8_t> bytes;
    be32(bytes, 0x00000801u);
    be32(bytes, 0);
    const auto p = (temp_dir() / "zerodim").string();
    put_bytes(p, bytes);
    CHECK_THROWS_WITH_AS(read_idx_file(p),
                         doctest::Contains("zero-sized dimension at offset 4"),
                         DataError);
  }
  SUBCASE("count mismatch between images and labels") {
    std::vector<uint8_t> lab;
    be32(lab, 0x00000801u);
    be32(lab, 3);
    lab.insert(lab.end(), {0, 1, 2});
    const auto lp = (temp_dir() / "threelabels").string();
    put_bytes(lp, lab);
    CHECK_THROWS_WITH_AS(load_idx(t.images, lp), doctest::Contains("dim mismatch"),
                         DataError);
  }
  SUBCASE("swapped files rejected") {
    CHECK_THROWS_AS(load_idx(t.labels, t.images), DataError);
  }
  SUBCASE("label outside hinted class range") {
    CHECK_THROWS_WITH_AS(load_idx(t.images, t.labels, "", 5),
                         doctest::Contains("label 7"), DataError);
  }
}

TEST_CASE("save_idx inverts the scaling byte-exactly") {
  const auto t = make_tiny_idx("savetrip");
  const Dataset d = load_idx(t.images, t.labels, "", 10);
  const auto ip = (temp_dir() / "saved-images").string();
  const auto lp = (temp_dir() / "saved-labels").string();
  save_idx(d, ip, lp, 2, 2);
  CHECK(file_bytes(ip) == t.image_bytes);
  CHECK(file_bytes(lp) == t.label_bytes);
  CHECK_THROWS_AS(save_idx(d, ip, lp, 3, 2), DataError);
  CHECK_THROWS_AS(save_idx(to_two_class(d), ip, lp, 2, 2), DataError);
}

TEST_CASE("to_two_class maps parity and rejects reapplication") {
  const auto t = make_tiny_idx("parity");
  const Dataset d = load_idx(t.images, t.labels, "", 10);
  const Dataset d2 = to_two_class(d);
  CHECK(d2.n_classes == 2);
  CHECK(d2.labels == std::vector<int>{+1, -1, -1, -1});  // 0,7,3,9
  CHECK(d2.inputs == d.inputs);
  CHECK(d2.name == d.name + "-2");
  CHECK_THROWS_WITH_AS(to_two_class(d2), doctest::Contains("10-class"), DataError);
}

TEST_CASE("cifar10 loader matches an independent record decoder and round-trips") {
  // Three records with patterned pixels.
  std::vector<uint8_t> bytes;
  for (int r = 0; r < 3; ++r) {
    bytes.push_back(uint8_t(2 * r + 1));  // labels 1, 3, 5
    for (int i = 0; i < 3072; ++i) bytes.push_back(uint8_t((r * 37 + i) % 256));
  }
  const auto p = (temp_dir() / "cifar-batch.bin").string();
  put_bytes(p, bytes);

  const Dataset d = load_cifar10({p}, "tiny-cifar");
  CHECK(d.n_samples() == 3);
  CHECK(d.n_features() == 3072);
  CHECK(d.n_classes == 10);
  CHECK(d.labels == std::vector<int>{1, 3, 5});

  // Independent decode of the first record, straight off the buffer.
  for (int i = 0; i < 3072; ++i) {
    const double expect = double(bytes[size_t(1 + i)]) / 127.5 - 1.0;
    REQUIRE(d.inputs(i, 0) == expect);
  }

  const auto copy = (temp_dir() / "cifar-copy.bin").string();
  save_cifar10(d, copy);
  CHECK(file_bytes(copy) == bytes);

  SUBCASE("partial record rejected with offset") {
    auto cut = bytes;
    cut.resize(2 * 3073 + 100);
    const auto q = (temp_dir() / "cifar-cut.bin").string();
    put_bytes(q, cut);
    CHECK_THROWS_WITH_AS(load_cifar10({q}), doctest::Contains("offset 6146"),
                         DataError);
  }
  SUBCASE("two batch files concatenate") {
    const Dataset both = load_cifar10({p, p});
    CHECK(both.n_samples() == 6);
    CHECK(both.inputs.col(3) == both.inputs.col(0));
  }
}

TEST_CASE("permuted tasks preserve pixel multisets and reproduce per seed") {
  const auto t = make_tiny_idx("perm");
  const Dataset d = load_idx(t.images, t.labels, "", 10);

  const auto tasks = permuted_tasks(d, 3, 99);
  REQUIRE(tasks.size() == 3);
  CHECK(tasks[0].inputs == d.inputs);
  CHECK(tasks[0].permutation.empty());

  for (int k = 1; k < 3; ++k) {
    const auto& task = tasks[size_t(k)];
    REQUIRE(task.permutation.size() == 4);
    // Bijection.
    auto sorted = task.permutation;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<Eigen::Index>{0, 1, 2, 3});
    // Per-sample multiset preserved.
    for (Eigen::Index n = 0; n < d.n_samples(); ++n) {
      Eigen::VectorXd a = d.inputs.col(n), b = task.inputs.col(n);
      std::sort(a.data(), a.data() + a.size());
      std::sort(b.data(), b.data() + b.size());
      REQUIRE(a == b);
    }
    // Consistent application: inputs(i, n) == parent(perm[i], n).
    for (Eigen::Index i = 0; i < 4; ++i) {
      REQUIRE(task.inputs(i, 1) == d.inputs(task.permutation[size_t(i)], 1));
    }
    CHECK(task.labels == d.labels);
  }

  // Same seed -> identical permutations; train/test consistency follows.
  const auto again = permuted_tasks(d, 3, 99);
  CHECK(again[1].permutation == tasks[1].permutation);
  CHECK(again[2].permutation == tasks[2].permutation);
  CHECK(feature_permutation(4, 1, 99) == tasks[1].permutation);
  CHECK(tasks[1].permutation != tasks[2].permutation);

  CHECK(permuted_tasks(d, 1, 5).size() == 1);
  CHECK_THROWS_AS(permuted_tasks(d, 0, 5), DataError);
}

TEST_CASE("real mnist loads with standard sizes and round-trips" *
          doctest::skip(!have_mnist())) {
  const std::string dir = mnist_dir();
  const Dataset test = load_idx(dir + "/t10k-images-idx3-ubyte",
                                dir + "/t10k-labels-idx1-ubyte", "mnist-test", 10);
  CHECK(test.n_samples() == 10000);
  CHECK(test.n_features() == 784);
  CHECK(test.n_classes == 10);
  CHECK(*std::max_element(test.labels.begin(), test.labels.end()) == 9);
  CHECK(*std::min_element(test.labels.begin(), test.labels.end()) == 0);
  CHECK(test.inputs.array().abs().maxCoeff() <= 1.0);

  // Byte-exact reserialization of both files.
  const auto ip = (temp_dir() / "mnist-images-copy").string();
  const auto lp = (temp_dir() / "mnist-labels-copy").string();
  save_idx(test, ip, lp, 28, 28);
  CHECK(file_bytes(ip) == file_bytes(dir + "/t10k-images-idx3-ubyte"));
  CHECK(file_bytes(lp) == file_bytes(dir + "/t10k-labels-idx1-ubyte"));

  // Parity split balance on the training labels (even digits are ~49.2%).
  const Dataset train = load_idx(dir + "/train-images-idx3-ubyte",
                                 dir + "/train-labels-idx1-ubyte", "mnist", 10);
  const Dataset train2 = to_two_class(train);
  const auto even = std::count(train2.labels.begin(), train2.labels.end(), +1);
  const double frac = double(even) / double(train2.labels.size());
  CHECK(frac == doctest::Approx(0.4915).epsilon(0.04));
}

TEST_CASE("data_root honors the environment") {
  const char* saved = std::getenv("BINMP_DATA_DIR");
  const std::string restore = saved ? saved : "";
  setenv("BINMP_DATA_DIR", "/somewhere/else", 1);
  CHECK(data_root() == "/somewhere/else");
  unsetenv("BINMP_DATA_DIR");
  CHECK(data_root() == "./data");
  if (saved) setenv("BINMP_DATA_DIR", restore.c_str(), 1);
}
