#pragma once

// Versioned binary tensor container.
//
// Layout (all integers little-endian):
//   magic      8 bytes  "SSMTTNSR"
//   version    u32
//   n_meta     u32, then n_meta x { u32 len, key bytes, u32 len, value bytes }
//   n_tensors  u32, then n_tensors x {
//                u32 len, name bytes, u8 dtype, u8 rank, u64 dims[rank],
//                u64 payload bytes, payload (little-endian elements) }
//   trailer    4 bytes  "END\0"

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace ssmt::io {

inline constexpr std::uint32_t kContainerVersion = 1;

enum class DType : std::uint8_t { F32 = 1, F64 = 2, I64 = 3, U8 = 4 };

std::size_t dtype_size(DType dtype);

struct TensorEntry {
  std::string name;
  DType dtype = DType::F32;
  std::vector<std::int64_t> shape;
  std::vector<std::byte> data;  // host byte order

  std::int64_t numel() const;

  template <class T>
  std::span<const T> as() const {
    return {reinterpret_cast<const T*>(data.data()), data.size() / sizeof(T)};
  }

  template <class T>
  std::span<T> as_mut() {
    return {reinterpret_cast<T*>(data.data()), data.size() / sizeof(T)};
  }

  template <class T>
  static TensorEntry make(std::string name, DType dtype, std::vector<std::int64_t> shape, std::span<const T> values) {
    TensorEntry e{std::move(name), dtype, std::move(shape), {}};
    e.data.resize(values.size_bytes());
    std::memcpy(e.data.data(), values.data(), values.size_bytes());
    return e;
  }
};

struct Container {
  std::map<std::string, std::string> meta;
  std::vector<TensorEntry> tensors;

  const TensorEntry* find(const std::string& name) const;
  /// Throws ShapeMismatch when absent.
  const TensorEntry& at(const std::string& name) const;
  const std::string& meta_at(const std::string& key) const;
};

void write_container(const Container& container, const std::filesystem::path& path);
Container read_container(const std::filesystem::path& path);

}  // namespace ssmt::io
