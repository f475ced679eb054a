#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace cssim::io {

std::string read_file(const std::filesystem::path& path);

/// Writes via a sibling temporary file and rename, so readers never see a
/// partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// Little-endian encoders/decoders over a byte string.
void put_u32(std::string& out, std::uint32_t v);
void put_u64(std::string& out, std::uint64_t v);
void put_f32(std::string& out, float v);
void put_f64(std::string& out, double v);

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  std::size_t position() const noexcept { return pos_; }

  // Throw CorruptionError on underrun.
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string_view take(std::size_t n);

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace cssim::io
