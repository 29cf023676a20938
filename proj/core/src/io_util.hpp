// Internal little-endian byte (de)serialization with a trailing CRC32.
#pragma once

#include <zlib.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "hsam/tensor.hpp"

namespace hsam::detail {

static_assert(std::endian::native == std::endian::little, "serialization assumes a little-endian host");

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    buf_.insert(buf_.end(), static_cast<const char*>(p), static_cast<const char*>(p) + n);
  }
  template <typename T>
  void pod(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    raw(&v, sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    raw(s.data(), s.size());
  }
  void tensor(const Tensor& t) {
    pod<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) pod<std::int64_t>(d);
    raw(t.data(), static_cast<std::size_t>(t.numel()) * sizeof(double));
  }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> bytes) : buf_(std::move(bytes)) {}
  void raw(void* p, std::size_t n) {
    if (pos_ + n > buf_.size()) throw std::runtime_error("file truncated");
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T pod() {
    T v;
    raw(&v, sizeof(T));
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    if (n > buf_.size() - pos_) throw std::runtime_error("file truncated");
    std::string s(static_cast<std::size_t>(n), '\0');
    raw(s.data(), static_cast<std::size_t>(n));
    return s;
  }
  Tensor tensor() {
    const int rank = pod<std::uint8_t>();
    Shape shape(static_cast<std::size_t>(rank));
    for (auto& d : shape) d = pod<std::int64_t>();
    Tensor t(shape);
    raw(t.data(), static_cast<std::size_t>(t.numel()) * sizeof(double));
    return t;
  }
  bool exhausted() const { return pos_ == buf_.size(); }

 private:
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc_of(const char* p, std::size_t n) {
  return static_cast<std::uint32_t>(crc32(0L, reinterpret_cast<const Bytef*>(p), static_cast<uInt>(n)));
}

inline std::uint32_t crc_of(const std::string& s) { return crc_of(s.data(), s.size()); }

inline void write_file_crc(const std::filesystem::path& path, const std::vector<char>& payload) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  const std::uint32_t crc = crc_of(payload.data(), payload.size());
  f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  f.write(reinterpret_cast<const char*>(&crc), sizeof(crc));
  if (!f) throw std::runtime_error("write failed for '" + path.string() + "'");
}

inline std::vector<char> read_file_crc(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(std::uint32_t) + 4) throw std::runtime_error("file too short: '" + path.string() + "'");
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - sizeof(stored), sizeof(stored));
  bytes.resize(bytes.size() - sizeof(stored));
  if (crc_of(bytes.data(), bytes.size()) != stored) {
    throw std::runtime_error("checksum mismatch in '" + path.string() + "'");
  }
  return bytes;
}

}  // namespace hsam::detail
