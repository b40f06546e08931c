#include "mpp/binary_io.h"

#include <bit>
#include <cstring>

#include "mpp/errors.h"

namespace mpp {
namespace {

static_assert(std::endian::native == std::endian::little,
              "container formats assume a little-endian host");

}  // namespace

BinaryWriter::BinaryWriter(const std::string& path)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw FormatError("cannot open '" + path + "' for writing");
}

void BinaryWriter::raw(const void* data, std::size_t n) {
  out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void BinaryWriter::magic(std::string_view four_cc) { raw(four_cc.data(), 4); }
void BinaryWriter::u8(std::uint8_t v) { raw(&v, 1); }
void BinaryWriter::u32(std::uint32_t v) { raw(&v, 4); }
void BinaryWriter::u64(std::uint64_t v) { raw(&v, 8); }
void BinaryWriter::f32(float v) { raw(&v, 4); }
void BinaryWriter::f64(double v) { raw(&v, 8); }

void BinaryWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  raw(s.data(), s.size());
}

void BinaryWriter::f32_array(std::span<const float> values) {
  raw(values.data(), values.size_bytes());
}

void BinaryWriter::f32_array(std::span<const double> values) {
  std::vector<float> narrowed(values.begin(), values.end());
  f32_array(narrowed);
}

void BinaryWriter::f64_array(std::span<const double> values) {
  raw(values.data(), values.size_bytes());
}

void BinaryWriter::close() {
  out_.flush();
  if (!out_) throw FormatError("write to '" + path_ + "' failed");
  out_.close();
}

BinaryReader::BinaryReader(const std::string& path)
    : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw FormatError("cannot open '" + path + "'");
}

void BinaryReader::raw(void* data, std::size_t n) {
  in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n) {
    throw FormatError("'" + path_ + "' is truncated");
  }
}

void BinaryReader::expect_magic(std::string_view four_cc) {
  char tag[4];
  raw(tag, 4);
  if (std::memcmp(tag, four_cc.data(), 4) != 0) {
    throw FormatError("'" + path_ + "' is not a " + std::string(four_cc) +
                      " file");
  }
}

std::string BinaryReader::peek_magic() {
  if (at_end()) return {};
  char tag[4];
  const auto pos = in_.tellg();
  raw(tag, 4);
  in_.seekg(pos);
  return std::string(tag, 4);
}

bool BinaryReader::at_end() {
  return in_.peek() == std::char_traits<char>::eof();
}

std::uint8_t BinaryReader::u8() {
  std::uint8_t v;
  raw(&v, 1);
  return v;
}

std::uint32_t BinaryReader::u32() {
  std::uint32_t v;
  raw(&v, 4);
  return v;
}

std::uint64_t BinaryReader::u64() {
  std::uint64_t v;
  raw(&v, 8);
  return v;
}

float BinaryReader::f32() {
  float v;
  raw(&v, 4);
  return v;
}

double BinaryReader::f64() {
  double v;
  raw(&v, 8);
  return v;
}

std::string BinaryReader::str() {
  const std::uint32_t n = u32();
  if (n > (1u << 20)) throw FormatError("'" + path_ + "': string too long");
  std::string s(n, '\0');
  raw(s.data(), n);
  return s;
}

std::vector<float> BinaryReader::f32_array(std::size_t n) {
  std::vector<float> v(n);
  raw(v.data(), n * sizeof(float));
  return v;
}

std::vector<double> BinaryReader::f32_array_as_f64(std::size_t n) {
  const auto narrow = f32_array(n);
  return {narrow.begin(), narrow.end()};
}

std::vector<double> BinaryReader::f64_array(std::size_t n) {
  std::vector<double> v(n);
  raw(v.data(), n * sizeof(double));
  return v;
}

}  // namespace mpp
