#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "hitframe/common.hpp"
#include "hitframe/tensor.hpp"

namespace hitframe::io {

// ---------------------------------------------------------------------------
// little-endian primitives
// ---------------------------------------------------------------------------

namespace detail {

inline void put_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void get_bytes(std::istream& is, void* p, std::size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  require(static_cast<std::size_t>(is.gcount()) == n, Errc::parse_failure,
          "unexpected end of binary stream");
}

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  put_bytes(os, b, 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  get_bytes(is, b, 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  put_u32(os, static_cast<std::uint32_t>(v));
  put_u32(os, static_cast<std::uint32_t>(v >> 32));
}

inline std::uint64_t get_u64(std::istream& is) {
  std::uint64_t lo = get_u32(is);
  std::uint64_t hi = get_u32(is);
  return lo | (hi << 32);
}

inline void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(os, bits);
}

inline double get_f64(std::istream& is) {
  std::uint64_t bits = get_u64(is);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline void put_str(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  put_bytes(os, s.data(), s.size());
}

inline std::string get_str(std::istream& is) {
  std::uint32_t n = get_u32(is);
  require(n <= (1u << 24), Errc::parse_failure, "unreasonable string length in binary stream");
  std::string s(n, '\0');
  if (n) get_bytes(is, s.data(), n);
  return s;
}

inline void put_f64_tensor(std::ostream& os, const nn::Tensor& t) {
  put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape) put_u64(os, d);
  for (double v : t.values) put_f64(os, v);
}

inline nn::Tensor get_f64_tensor(std::istream& is) {
  std::uint32_t rank = get_u32(is);
  require(rank >= 1 && rank <= 8, Errc::parse_failure, "bad tensor rank in binary stream");
  nn::Shape shape(rank);
  for (auto& d : shape) d = get_u64(is);
  std::size_t n = nn::shape_numel(shape);
  require(n <= (1ull << 30), Errc::parse_failure, "unreasonable tensor size in binary stream");
  std::vector<double> values(n);
  for (double& v : values) v = get_f64(is);
  return nn::Tensor(std::move(shape), std::move(values));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// HFTN: raw tensor container (byte tensors for frame stacks), with a small
// string-metadata map. Layout: "HFTN" | u32 version | u32 meta count |
// (string key, string value)* | u8 dtype (0=u8, 1=f64) | u32 rank |
// u64 extents* | payload (LE).
// ---------------------------------------------------------------------------

struct U8Tensor {
  nn::Shape shape;
  std::vector<std::uint8_t> values;
  std::map<std::string, std::string> meta;
};

inline void save_u8_tensor(const std::string& path, const U8Tensor& t) {
  require(nn::shape_numel(t.shape) == t.values.size(), Errc::shape_mismatch,
          "u8 tensor extent mismatch");
  std::ofstream os(path, std::ios::binary);
  require(os.good(), Errc::io_failure, "cannot open " + path + " for writing");
  detail::put_bytes(os, "HFTN", 4);
  detail::put_u32(os, static_cast<std::uint32_t>(kSchemaVersion));
  detail::put_u32(os, static_cast<std::uint32_t>(t.meta.size()));
  for (const auto& [k, v] : t.meta) {
    detail::put_str(os, k);
    detail::put_str(os, v);
  }
  os.put(static_cast<char>(0));
  detail::put_u32(os, static_cast<std::uint32_t>(t.shape.size()));
  for (std::size_t d : t.shape) detail::put_u64(os, d);
  detail::put_bytes(os, t.values.data(), t.values.size());
  require(os.good(), Errc::io_failure, "write failed for " + path);
}

inline U8Tensor load_u8_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), Errc::io_failure, "cannot open " + path);
  char magic[4];
  detail::get_bytes(is, magic, 4);
  require(std::memcmp(magic, "HFTN", 4) == 0, Errc::parse_failure, path + " is not a tensor container");
  std::uint32_t version = detail::get_u32(is);
  require(version == static_cast<std::uint32_t>(kSchemaVersion), Errc::parse_failure,
          "unsupported tensor container version " + std::to_string(version));
  U8Tensor t;
  std::uint32_t metas = detail::get_u32(is);
  for (std::uint32_t i = 0; i < metas; ++i) {
    std::string k = detail::get_str(is);
    t.meta[k] = detail::get_str(is);
  }
  char dtype;
  detail::get_bytes(is, &dtype, 1);
  require(dtype == 0, Errc::parse_failure, "expected u8 payload in " + path);
  std::uint32_t rank = detail::get_u32(is);
  require(rank >= 1 && rank <= 8, Errc::parse_failure, "bad rank in " + path);
  t.shape.resize(rank);
  for (auto& d : t.shape) d = detail::get_u64(is);
  std::size_t n = nn::shape_numel(t.shape);
  require(n <= (1ull << 32), Errc::parse_failure, "unreasonable payload in " + path);
  t.values.resize(n);
  detail::get_bytes(is, t.values.data(), n);
  return t;
}

// ---------------------------------------------------------------------------
// HFCK: model checkpoint. Layout: "HFCK" | u32 version | string kind |
// u32 meta count | (string key, string value)* | u32 tensor count |
// (string name, f64 tensor)*. Tensors are named flat; model code owns the
// naming convention.
// ---------------------------------------------------------------------------

struct Checkpoint {
  std::string kind;
  std::map<std::string, std::string> meta;
  std::map<std::string, nn::Tensor> tensors;
};

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), Errc::io_failure, "cannot open " + path + " for writing");
  detail::put_bytes(os, "HFCK", 4);
  detail::put_u32(os, static_cast<std::uint32_t>(kSchemaVersion));
  detail::put_str(os, ck.kind);
  detail::put_u32(os, static_cast<std::uint32_t>(ck.meta.size()));
  for (const auto& [k, v] : ck.meta) {
    detail::put_str(os, k);
    detail::put_str(os, v);
  }
  detail::put_u32(os, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, t] : ck.tensors) {
    detail::put_str(os, name);
    detail::put_f64_tensor(os, t);
  }
  require(os.good(), Errc::io_failure, "write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), Errc::io_failure, "cannot open " + path);
  char magic[4];
  detail::get_bytes(is, magic, 4);
  require(std::memcmp(magic, "HFCK", 4) == 0, Errc::parse_failure, path + " is not a checkpoint");
  std::uint32_t version = detail::get_u32(is);
  require(version == static_cast<std::uint32_t>(kSchemaVersion), Errc::parse_failure,
          "unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.kind = detail::get_str(is);
  std::uint32_t metas = detail::get_u32(is);
  for (std::uint32_t i = 0; i < metas; ++i) {
    std::string k = detail::get_str(is);
    ck.meta[k] = detail::get_str(is);
  }
  std::uint32_t tensors = detail::get_u32(is);
  for (std::uint32_t i = 0; i < tensors; ++i) {
    std::string name = detail::get_str(is);
    ck.tensors.emplace(name, detail::get_f64_tensor(is));
  }
  return ck;
}

}  // namespace hitframe::io
