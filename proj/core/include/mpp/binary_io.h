#ifndef MPP_BINARY_IO_H_
#define MPP_BINARY_IO_H_

#include <array>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mpp {

// Little-endian writer for the MPP* container formats.
class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string& path);

  void magic(std::string_view four_cc);
  void u8(std::uint8_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void str(std::string_view s);  // u32 length + bytes
  void f32_array(std::span<const float> values);
  void f32_array(std::span<const double> values);  // narrowed to f32
  void f64_array(std::span<const double> values);

  // Flushes and throws FormatError if any write failed.
  void close();

 private:
  void raw(const void* data, std::size_t n);

  std::string path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path);

  // Throws FormatError naming the expected tag on mismatch.
  void expect_magic(std::string_view four_cc);
  // Reads the magic without judging it; "" at end of file.
  std::string peek_magic();
  bool at_end();

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string str();
  std::vector<float> f32_array(std::size_t n);
  std::vector<double> f32_array_as_f64(std::size_t n);
  std::vector<double> f64_array(std::size_t n);

  const std::string& path() const { return path_; }

 private:
  void raw(void* data, std::size_t n);

  std::string path_;
  std::ifstream in_;
};

}  // namespace mpp

#endif  // MPP_BINARY_IO_H_
