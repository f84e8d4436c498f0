#include "binmp/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <stdexcept>

#include <json.hpp>

namespace binmp {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'B', 'M', 'P', 'K'};

std::string hash_to_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 16);
}

uint64_t hex_to_hash(const std::string& s) {
  if (s.size() != 16) throw std::runtime_error("bad config_hash field");
  return std::strtoull(s.c_str(), nullptr, 16);
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

const NamedTensor* CheckpointData::find(std::string_view name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

void save_checkpoint(const std::string& path, uint64_t config_hash,
                     const std::vector<NamedTensor>& tensors) {
  json header;
  header["version"] = 1;
  header["config_hash"] = hash_to_hex(config_hash);
  json list = json::array();
  uint64_t offset = 0;
  for (const auto& t : tensors) {
    uint64_t count = 1;
    for (auto d : t.shape) count *= static_cast<uint64_t>(d);
    if (count != t.data.size())
      throw std::invalid_argument("tensor '" + t.name +
                                  "' shape does not match its data");
    list.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}});
    offset += count;
  }
  header["tensors"] = std::move(list);
  std::string hdr = header.dump();

  File f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  uint32_t hlen = static_cast<uint32_t>(hdr.size());
  bool ok = std::fwrite(kMagic, 1, 4, f.get()) == 4 &&
            std::fwrite(&hlen, sizeof hlen, 1, f.get()) == 1 &&
            std::fwrite(hdr.data(), 1, hdr.size(), f.get()) == hdr.size();
  for (const auto& t : tensors) {
    ok = ok && std::fwrite(t.data.data(), sizeof(double), t.data.size(),
                           f.get()) == t.data.size();
  }
  if (!ok || std::fflush(f.get()) != 0)
    throw std::runtime_error("short write: " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
  File f(std::fopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  uint32_t hlen = 0;
  if (std::fread(magic, 1, 4, f.get()) != 4 ||
      std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  if (std::fread(&hlen, sizeof hlen, 1, f.get()) != 1 || hlen == 0 ||
      hlen > (1u << 26))
    throw std::runtime_error("bad header length: " + path);
  std::string hdr(hlen, '\0');
  if (std::fread(hdr.data(), 1, hlen, f.get()) != hlen)
    throw std::runtime_error("truncated header: " + path);

  json header;
  try {
    header = json::parse(hdr);
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed header in " + path + ": " + e.what());
  }

  CheckpointData out;
  try {
    out.version = header.at("version").get<uint32_t>();
    out.config_hash = hex_to_hash(header.at("config_hash").get<std::string>());
    struct Entry {
      std::string name;
      std::vector<Eigen::Index> shape;
      uint64_t offset;
    };
    std::vector<Entry> entries;
    for (const auto& item : header.at("tensors")) {
      entries.push_back({item.at("name").get<std::string>(),
                         item.at("shape").get<std::vector<Eigen::Index>>(),
                         item.at("offset").get<uint64_t>()});
    }
    uint64_t expected = 0;
    for (const auto& e : entries) {
      uint64_t count = 1;
      for (auto d : e.shape) {
        if (d < 0) throw std::runtime_error("negative dimension");
        count *= static_cast<uint64_t>(d);
      }
      if (e.offset != expected)
        throw std::runtime_error("non-contiguous tensor layout");
      expected += count;
      NamedTensor t;
      t.name = e.name;
      t.shape = e.shape;
      t.data.resize(count);
      if (std::fread(t.data.data(), sizeof(double), count, f.get()) != count)
        throw std::runtime_error("truncated payload");
      out.tensors.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed header in " + path + ": " + e.what());
  }
  return out;
}

}  // namespace binmp
