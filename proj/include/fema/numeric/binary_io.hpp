#pragma once

#include "fema/numeric/mlp.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

// Binary layout shared by checkpoints and memory snapshots. All integers and
// floats are little-endian; floats are IEEE-754 binary64.
//
//   network:  "FMLP" u32 version(=1) u32 layer_count
//             per layer: u32 in, u32 out, u8 activation,
//                        f64[out*in] weight (row-major), f64[out] bias
//   vector:   u64 length, f64[length]
//   string:   u64 length, bytes

namespace fema::numeric {

inline constexpr std::array<char, 4> kMlpMagic{'F', 'M', 'L', 'P'};
inline constexpr std::uint32_t kMlpVersion = 1;

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  void bytes(const void* data, std::size_t n);
  void magic(const std::array<char, 4>& m) { bytes(m.data(), m.size()); }
  void u8(std::uint8_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void vector(const Vector& v);
  void matrix(const Matrix& m);  // u64 rows, u64 cols, row-major values
  void string(std::string_view s);

 private:
  std::ostream& out_;
};

/// Throws FormatError on truncation or implausible lengths.
class BinaryReader {
 public:
  explicit BinaryReader(std::istream& in) : in_(in) {}

  void bytes(void* data, std::size_t n);
  void expect_magic(const std::array<char, 4>& m, std::string_view what);
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  Vector vector();
  Matrix matrix();
  std::string string();

 private:
  std::istream& in_;
};

void write_mlp(BinaryWriter& w, const Mlp& net);
Mlp read_mlp(BinaryReader& r);

void save_mlp(const std::filesystem::path& path, const Mlp& net);
Mlp load_mlp(const std::filesystem::path& path);

}  // namespace fema::numeric
