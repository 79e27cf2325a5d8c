// SPDX-License-Identifier: Apache-2.0
//
// Little-endian byte packing shared by the dataset and checkpoint formats.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cen/error.hpp"

namespace cen::detail {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

class ByteWriter {
 public:
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void magic(std::string_view m) { raw(m.data(), m.size()); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void f32(float v) { raw(&v, 4); }
  void f64(double v) { raw(&v, 8); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  template <typename V>
  void array(std::span<const V> values) {
    raw(values.data(), values.size() * sizeof(V));
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string what)
      : bytes_(bytes), what_(std::move(what)) {}

  void raw(void* out, std::size_t n) {
    if (n > bytes_.size() - pos_)
      throw FormatError(what_ + ": truncated at byte " + std::to_string(pos_) + " (needs " +
                        std::to_string(n) + " more bytes)");
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  void expect_magic(std::string_view m) {
    std::string got(m.size(), '\0');
    if (bytes_.size() < m.size())
      throw FormatError(what_ + ": file too short for magic " + std::string(m));
    raw(got.data(), m.size());
    if (got != m) throw FormatError(what_ + ": bad magic (expected " + std::string(m) + ")");
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, 8);
    return v;
  }
  float f32() {
    float v;
    raw(&v, 4);
    return v;
  }
  double f64() {
    double v;
    raw(&v, 8);
    return v;
  }
  std::string str(std::size_t limit = 1u << 20) {
    const auto n = u32();
    if (n > limit) throw FormatError(what_ + ": string length " + std::to_string(n) + " too large");
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  template <typename V>
  std::vector<V> array(std::size_t count) {
    if (count > (bytes_.size() - pos_) / sizeof(V))
      throw FormatError(what_ + ": array of " + std::to_string(count) +
                        " elements exceeds the remaining bytes");
    std::vector<V> v(count);
    raw(v.data(), count * sizeof(V));
    return v;
  }
  void expect_end() const {
    if (pos_ != bytes_.size())
      throw FormatError(what_ + ": " + std::to_string(bytes_.size() - pos_) +
                        " trailing bytes");
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::string what_;
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to " + path.string() + " failed");
}

}  // namespace cen::detail
