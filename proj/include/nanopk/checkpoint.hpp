#pragma once

// Flat named-tensor checkpoint file.
//
//   "NPKCKPT1"                      8-byte magic
//   u64 meta_count, then per entry: u32 key_len, key, u32 value_len, value
//   u64 tensor_count, then per tensor:
//       u32 name_len, name, u64 rows, u64 cols, rows*cols IEEE-754 binary64
//   u64 FNV-1a hash of every preceding byte
//
// Integers and doubles are little-endian regardless of host.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "nanopk/error.hpp"

namespace nanopk {

struct NamedTensor {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
};

struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<NamedTensor> tensors;

  void set_meta(const std::string& key, std::string value) {
    for (auto& kv : meta)
      if (kv.first == key) {
        kv.second = std::move(value);
        return;
      }
    meta.emplace_back(key, std::move(value));
  }

  const std::string& meta_value(const std::string& key) const {
    for (const auto& kv : meta)
      if (kv.first == key) return kv.second;
    throw Error(Errc::BadCheckpoint, "missing metadata key " + key);
  }

  bool has_meta(const std::string& key) const {
    for (const auto& kv : meta)
      if (kv.first == key) return true;
    return false;
  }

  bool has_tensor(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return true;
    return false;
  }

  const NamedTensor& tensor(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return t;
    throw Error(Errc::BadCheckpoint, "missing tensor " + name);
  }

  void add(std::string name, std::size_t rows, std::size_t cols, std::vector<double> values) {
    if (values.size() != rows * cols) throw Error(Errc::ShapeMismatch, "checkpoint tensor " + name);
    tensors.push_back({std::move(name), rows, cols, std::move(values)});
  }
};

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'N', 'P', 'K', 'C', 'K', 'P', 'T', '1'};

class HashingWriter {
 public:
  explicit HashingWriter(std::ostream& out) : out_(out) {}
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) hash_ = (hash_ ^ c[i]) * 1099511628211ULL;
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 8);
  }
  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 4);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void f64(double d) { u64(std::bit_cast<std::uint64_t>(d)); }
  std::uint64_t hash() const { return hash_; }

 private:
  std::ostream& out_;
  std::uint64_t hash_ = 14695981039346656037ULL;
};

class HashingReader {
 public:
  explicit HashingReader(std::istream& in) : in_(in) {}
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw Error(Errc::BadCheckpoint, "truncated checkpoint");
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) hash_ = (hash_ ^ c[i]) * 1099511628211ULL;
  }
  std::uint64_t u64() {
    unsigned char b[8];
    bytes(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    unsigned char b[4];
    bytes(b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  std::string str(std::size_t limit = 1 << 20) {
    const std::uint32_t n = u32();
    if (n > limit) throw Error(Errc::BadCheckpoint, "string length out of range");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::uint64_t hash() const { return hash_; }

 private:
  std::istream& in_;
  std::uint64_t hash_ = 14695981039346656037ULL;
};

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  detail::HashingWriter w(out);
  w.bytes(detail::kCheckpointMagic, 8);
  w.u64(ck.meta.size());
  for (const auto& [k, v] : ck.meta) {
    w.str(k);
    w.str(v);
  }
  w.u64(ck.tensors.size());
  for (const auto& t : ck.tensors) {
    w.str(t.name);
    w.u64(t.rows);
    w.u64(t.cols);
    for (double d : t.values) w.f64(d);
  }
  const std::uint64_t h = w.hash();
  w.u64(h);
  if (!out) throw Error(Errc::Io, "checkpoint write failed");
}

inline Checkpoint read_checkpoint(std::istream& in) {
  detail::HashingReader r(in);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, detail::kCheckpointMagic, 8) != 0) throw Error(Errc::BadCheckpoint, "bad magic");
  Checkpoint ck;
  const std::uint64_t n_meta = r.u64();
  if (n_meta > 100000) throw Error(Errc::BadCheckpoint, "metadata count out of range");
  for (std::uint64_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    std::string v = r.str();
    ck.meta.emplace_back(std::move(k), std::move(v));
  }
  const std::uint64_t n_tensors = r.u64();
  if (n_tensors > 100000) throw Error(Errc::BadCheckpoint, "tensor count out of range");
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    NamedTensor t;
    t.name = r.str();
    t.rows = r.u64();
    t.cols = r.u64();
    if (t.rows > (1u << 24) || t.cols > (1u << 24) || t.rows * t.cols > (1u << 26))
      throw Error(Errc::BadCheckpoint, "tensor shape out of range for " + t.name);
    t.values.resize(t.rows * t.cols);
    for (double& d : t.values) d = r.f64();
    ck.tensors.push_back(std::move(t));
  }
  const std::uint64_t expected = r.hash();
  if (r.u64() != expected) throw Error(Errc::BadCheckpoint, "checksum mismatch");
  if (in.peek() != std::char_traits<char>::eof()) throw Error(Errc::BadCheckpoint, "trailing bytes");
  return ck;
}

/// Writes to a sibling temp file first so a failed write leaves no partial file.
inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::Io, "cannot write " + tmp);
    write_checkpoint(out, ck);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(Errc::Io, "cannot move checkpoint into " + path);
  }
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::BadCheckpoint, "cannot open " + path);
  return read_checkpoint(in);
}

}  // namespace nanopk
