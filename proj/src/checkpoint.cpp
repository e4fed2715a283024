// SPDX-License-Identifier: Apache-2.0
#include "afd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "afd/error.hpp"

namespace afd {
namespace {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    if (n == 0) return;
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  void bytes(void* p, std::size_t n) {
    if (n == 0) return;
    if (pos_ + n > in_.size()) throw IoError("container truncated");
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, 8);
    return v;
  }
  std::string str() {
    std::string s(u32(), '\0');
    bytes(s.data(), s.size());
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

constexpr char kMagic[4] = {'A', 'F', 'D', 'C'};

}  // namespace

void Container::add(std::string name, const Tensor& t) {
  tensors.emplace_back(std::move(name), t.detach());
}

bool Container::has(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return true;
  }
  return false;
}

const Tensor& Container::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw CheckpointMismatch("missing tensor '" + name + "'");
}

const std::string& Container::meta(const std::string& key) const {
  auto it = metadata.find(key);
  if (it == metadata.end()) throw CheckpointMismatch("missing metadata '" + key + "'");
  return it->second;
}

std::vector<std::uint8_t> serialize(const Container& c) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kContainerVersion);
  w.u32(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& [name, t] : c.tensors) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u64(d);
    w.bytes(t.data().data(), t.numel() * sizeof(double));
  }
  w.u32(static_cast<std::uint32_t>(c.metadata.size()));
  for (const auto& [k, v] : c.metadata) {
    w.str(k);
    w.str(v);
  }
  return std::move(w.out);
}

Container deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw IoError("not an AFDC container");
  const std::uint32_t version = r.u32();
  if (version != kContainerVersion) {
    throw CheckpointMismatch("container version " + std::to_string(version) +
                             ", expected " + std::to_string(kContainerVersion));
  }
  Container c;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    Shape shape(r.u32());
    for (auto& d : shape) d = r.u64();
    std::vector<double> data(numel_of(shape));
    r.bytes(data.data(), data.size() * sizeof(double));
    c.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  const std::uint32_t meta = r.u32();
  for (std::uint32_t i = 0; i < meta; ++i) {
    std::string k = r.str();
    c.metadata[std::move(k)] = r.str();
  }
  if (!r.done()) throw IoError("trailing bytes after container");
  return c;
}

void save_container(const Container& c, const std::filesystem::path& path) {
  const auto bytes = serialize(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Container load_container(const std::filesystem::path& path) {
  return deserialize(read_file(path));
}

std::uint64_t checksum(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace afd
