#pragma once

// Little-endian encoding helpers shared by the FEDF/FEDA/FEDW readers and writers.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace fedcof::detail {

class ByteWriter {
 public:
  void magic(std::string_view tag);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);

  const std::vector<unsigned char>& bytes() const { return buf_; }
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<unsigned char> buf_;
};

class ByteReader {
 public:
  ByteReader(std::vector<unsigned char> data, std::string what);

  static ByteReader load(const std::filesystem::path& path, std::string what);

  void expect_magic(std::string_view tag);
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();

  std::size_t remaining() const { return data_.size() - pos_; }
  /// Throws "truncated" unless at least `n` bytes remain.
  void require(std::uint64_t n) const;

 private:
  std::vector<unsigned char> data_;
  std::size_t pos_ = 0;
  std::string what_;
};

}  // namespace fedcof::detail
