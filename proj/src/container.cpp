#include "ssmt/container.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "ssmt/error.hpp"

namespace ssmt::io {

namespace {

constexpr std::array<char, 8> kMagic{'S', 'S', 'M', 'T', 'T', 'N', 'S', 'R'};
constexpr std::array<char, 4> kTrailer{'E', 'N', 'D', '\0'};
constexpr std::uint8_t kMaxRank = 8;

void swap_elements(std::span<std::byte> bytes, std::size_t width) {
  if constexpr (std::endian::native == std::endian::little) {
    (void)bytes;
    (void)width;
  } else {
    for (std::size_t i = 0; i + width <= bytes.size(); i += width) {
      std::reverse(bytes.begin() + static_cast<std::ptrdiff_t>(i),
                   bytes.begin() + static_cast<std::ptrdiff_t>(i + width));
    }
  }
}

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw Error(Errc::Io, "cannot open '" + path.string() + "' for writing");
  }

  void raw(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }

  template <class T>
  void scalar(T v) {
    std::array<std::byte, sizeof(T)> buf;
    std::memcpy(buf.data(), &v, sizeof(T));
    swap_elements(buf, sizeof(T));
    raw(buf.data(), buf.size());
  }

  void str(const std::string& s) {
    scalar(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }

  void finish(const std::filesystem::path& path) {
    out_.flush();
    if (!out_) throw Error(Errc::Io, "write failed for '" + path.string() + "'");
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw Error(Errc::Io, "cannot open '" + path.string() + "'");
    in_.seekg(0, std::ios::end);
    remaining_ = static_cast<std::uint64_t>(in_.tellg());
    in_.seekg(0, std::ios::beg);
  }

  void raw(void* p, std::uint64_t n) {
    if (n > remaining_) throw Error(Errc::CorruptHeader, "container is truncated");
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_) throw Error(Errc::CorruptHeader, "container is truncated");
    remaining_ -= n;
  }

  template <class T>
  T scalar() {
    std::array<std::byte, sizeof(T)> buf;
    raw(buf.data(), buf.size());
    swap_elements(buf, sizeof(T));
    T v;
    std::memcpy(&v, buf.data(), sizeof(T));
    return v;
  }

  std::string str() {
    const auto n = scalar<std::uint32_t>();
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }

  std::uint64_t remaining() const { return remaining_; }

 private:
  std::ifstream in_;
  std::uint64_t remaining_ = 0;
};

}  // namespace

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::F32: return 4;
    case DType::F64: return 8;
    case DType::I64: return 8;
    case DType::U8: return 1;
  }
  throw Error(Errc::CorruptHeader, "unknown dtype code");
}

std::int64_t TensorEntry::numel() const {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

const TensorEntry* Container::find(const std::string& name) const {
  auto it = std::find_if(tensors.begin(), tensors.end(), [&](const auto& t) { return t.name == name; });
  return it == tensors.end() ? nullptr : &*it;
}

const TensorEntry& Container::at(const std::string& name) const {
  if (const auto* t = find(name)) return *t;
  throw Error(Errc::ShapeMismatch, "container has no tensor '" + name + "'");
}

const std::string& Container::meta_at(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw Error(Errc::CorruptHeader, "container has no metadata key '" + key + "'");
  return it->second;
}

void write_container(const Container& container, const std::filesystem::path& path) {
  Writer w(path);
  w.raw(kMagic.data(), kMagic.size());
  w.scalar(kContainerVersion);
  w.scalar(static_cast<std::uint32_t>(container.meta.size()));
  for (const auto& [k, v] : container.meta) {
    w.str(k);
    w.str(v);
  }
  w.scalar(static_cast<std::uint32_t>(container.tensors.size()));
  for (const auto& t : container.tensors) {
    const auto width = dtype_size(t.dtype);
    if (t.shape.size() > kMaxRank) throw Error(Errc::ShapeMismatch, "tensor rank too large: " + t.name);
    if (static_cast<std::uint64_t>(t.numel()) * width != t.data.size()) {
      throw Error(Errc::ShapeMismatch, "payload size does not match shape for '" + t.name + "'");
    }
    w.str(t.name);
    w.scalar(static_cast<std::uint8_t>(t.dtype));
    w.scalar(static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) w.scalar(static_cast<std::uint64_t>(d));
    w.scalar(static_cast<std::uint64_t>(t.data.size()));
    if constexpr (std::endian::native == std::endian::little) {
      w.raw(t.data.data(), t.data.size());
    } else {
      auto copy = t.data;
      swap_elements(copy, width);
      w.raw(copy.data(), copy.size());
    }
  }
  w.raw(kTrailer.data(), kTrailer.size());
  w.finish(path);
}

Container read_container(const std::filesystem::path& path) {
  Reader r(path);
  std::array<char, 8> magic{};
  r.raw(magic.data(), magic.size());
  if (magic != kMagic) throw Error(Errc::CorruptHeader, "bad magic in '" + path.string() + "'");
  const auto version = r.scalar<std::uint32_t>();
  if (version != kContainerVersion) {
    throw Error(Errc::VersionMismatch, "container version " + std::to_string(version) + ", expected " +
                                           std::to_string(kContainerVersion));
  }
  Container c;
  const auto n_meta = r.scalar<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto key = r.str();
    c.meta[std::move(key)] = r.str();
  }
  const auto n_tensors = r.scalar<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    TensorEntry t;
    t.name = r.str();
    const auto code = r.scalar<std::uint8_t>();
    if (code < 1 || code > 4) throw Error(Errc::CorruptHeader, "bad dtype code for '" + t.name + "'");
    t.dtype = static_cast<DType>(code);
    const auto rank = r.scalar<std::uint8_t>();
    if (rank > kMaxRank) throw Error(Errc::CorruptHeader, "bad rank for '" + t.name + "'");
    for (std::uint8_t d = 0; d < rank; ++d) t.shape.push_back(static_cast<std::int64_t>(r.scalar<std::uint64_t>()));
    const auto bytes = r.scalar<std::uint64_t>();
    if (bytes != static_cast<std::uint64_t>(t.numel()) * dtype_size(t.dtype) || bytes > r.remaining()) {
      throw Error(Errc::CorruptHeader, "payload size mismatch for '" + t.name + "'");
    }
    t.data.resize(bytes);
    r.raw(t.data.data(), bytes);
    swap_elements(t.data, dtype_size(t.dtype));
    c.tensors.push_back(std::move(t));
  }
  std::array<char, 4> trailer{};
  r.raw(trailer.data(), trailer.size());
  if (trailer != kTrailer) throw Error(Errc::CorruptHeader, "missing trailer in '" + path.string() + "'");
  return c;
}

}  // namespace ssmt::io
