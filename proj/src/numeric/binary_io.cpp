#include "fema/numeric/binary_io.hpp"

#include "fema/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace fema::numeric {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace {
constexpr std::uint64_t kMaxLength = std::uint64_t{1} << 32;
}

void BinaryWriter::bytes(const void* data, std::size_t n) {
  out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out_) throw FormatError("write failed");
}

void BinaryWriter::u8(std::uint8_t v) { bytes(&v, 1); }
void BinaryWriter::u32(std::uint32_t v) { bytes(&v, 4); }
void BinaryWriter::u64(std::uint64_t v) { bytes(&v, 8); }
void BinaryWriter::f64(double v) { bytes(&v, 8); }

void BinaryWriter::vector(const Vector& v) {
  u64(static_cast<std::uint64_t>(v.size()));
  bytes(v.data(), static_cast<std::size_t>(v.size()) * sizeof(double));
}

void BinaryWriter::matrix(const Matrix& m) {
  u64(static_cast<std::uint64_t>(m.rows()));
  u64(static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
}

void BinaryWriter::string(std::string_view s) {
  u64(s.size());
  bytes(s.data(), s.size());
}

void BinaryReader::bytes(void* data, std::size_t n) {
  in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n) throw FormatError("unexpected end of file");
}

void BinaryReader::expect_magic(const std::array<char, 4>& m, std::string_view what) {
  std::array<char, 4> got{};
  bytes(got.data(), got.size());
  if (got != m) throw FormatError(std::string(what) + ": bad magic bytes");
}

std::uint8_t BinaryReader::u8() {
  std::uint8_t v = 0;
  bytes(&v, 1);
  return v;
}

std::uint32_t BinaryReader::u32() {
  std::uint32_t v = 0;
  bytes(&v, 4);
  return v;
}

std::uint64_t BinaryReader::u64() {
  std::uint64_t v = 0;
  bytes(&v, 8);
  return v;
}

double BinaryReader::f64() {
  double v = 0;
  bytes(&v, 8);
  return v;
}

Vector BinaryReader::vector() {
  const auto n = u64();
  if (n > kMaxLength) throw FormatError("implausible vector length");
  Vector v(static_cast<Eigen::Index>(n));
  bytes(v.data(), n * sizeof(double));
  return v;
}

Matrix BinaryReader::matrix() {
  const auto rows = u64();
  const auto cols = u64();
  if (rows > kMaxLength || cols > kMaxLength || rows * cols > kMaxLength)
    throw FormatError("implausible matrix shape");
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = f64();
  return m;
}

std::string BinaryReader::string() {
  const auto n = u64();
  if (n > kMaxLength) throw FormatError("implausible string length");
  std::string s(n, '\0');
  bytes(s.data(), n);
  return s;
}

void write_mlp(BinaryWriter& w, const Mlp& net) {
  w.magic(kMlpMagic);
  w.u32(kMlpVersion);
  w.u32(static_cast<std::uint32_t>(net.depth()));
  for (const auto& l : net.layers()) {
    w.u32(static_cast<std::uint32_t>(l.in()));
    w.u32(static_cast<std::uint32_t>(l.out()));
    w.u8(static_cast<std::uint8_t>(l.act));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.f64(l.weight(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) w.f64(l.bias[r]);
  }
}

Mlp read_mlp(BinaryReader& r) {
  r.expect_magic(kMlpMagic, "network");
  const auto version = r.u32();
  if (version != kMlpVersion) throw FormatError("network: unsupported version " + std::to_string(version));
  const auto depth = r.u32();
  if (depth == 0 || depth > 1024) throw FormatError("network: implausible layer count");
  std::vector<Layer> layers;
  for (std::uint32_t i = 0; i < depth; ++i) {
    const auto in = r.u32();
    const auto out = r.u32();
    const auto act = r.u8();
    if (in == 0 || out == 0 || in > (1u << 20) || out > (1u << 20))
      throw FormatError("network: implausible layer width");
    if (act > static_cast<std::uint8_t>(Activation::relu)) throw FormatError("network: bad activation tag");
    Layer l;
    l.act = static_cast<Activation>(act);
    l.weight.resize(out, in);
    l.bias.resize(out);
    for (Eigen::Index rr = 0; rr < l.weight.rows(); ++rr)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(rr, c) = r.f64();
    for (Eigen::Index rr = 0; rr < l.bias.size(); ++rr) l.bias[rr] = r.f64();
    layers.push_back(std::move(l));
  }
  try {
    return Mlp(std::move(layers));
  } catch (const Error& e) {
    throw FormatError(std::string("network: ") + e.what());
  }
}

void save_mlp(const std::filesystem::path& path, const Mlp& net) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  BinaryWriter w(out);
  write_mlp(w, net);
}

Mlp load_mlp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  BinaryReader r(in);
  return read_mlp(r);
}

}  // namespace fema::numeric
