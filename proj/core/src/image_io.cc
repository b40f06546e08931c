#include "mpp/image_io.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <vector>

#include "mpp/errors.h"

namespace mpp {
namespace {

class PnmScanner {
 public:
  PnmScanner(std::vector<unsigned char> bytes, std::string path)
      : bytes_(std::move(bytes)), path_(std::move(path)) {}

  // Next whitespace-delimited header token, skipping '#' comments.
  unsigned long number() {
    skip_space();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) fail("malformed header");
    unsigned long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_++] - '0');
      if (v > (1ul << 24)) fail("header value too large");
    }
    return v;
  }

  // Single whitespace byte separating the header from binary data.
  void end_header() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) fail("malformed header");
    ++pos_;
  }

  unsigned sample(bool binary, bool wide) {
    if (!binary) return static_cast<unsigned>(number());
    const std::size_t n = wide ? 2 : 1;
    if (pos_ + n > bytes_.size()) fail("truncated pixel data");
    unsigned v = bytes_[pos_++];
    if (wide) v = (v << 8) | bytes_[pos_++];
    return v;
  }

  std::string magic() {
    if (bytes_.size() < 2 || bytes_[0] != 'P') fail("not a PNM file");
    pos_ = 2;
    return std::string(bytes_.begin(), bytes_.begin() + 2);
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(path_ + ": " + what);
  }

 private:
  void skip_space() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::vector<unsigned char> bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

Tensor read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open image " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), {});
  PnmScanner scan(std::move(bytes), path);
  const std::string magic = scan.magic();
  std::size_t channels = 0;
  bool binary = false;
  if (magic == "P2") channels = 1;
  else if (magic == "P5") channels = 1, binary = true;
  else if (magic == "P3") channels = 3;
  else if (magic == "P6") channels = 3, binary = true;
  else scan.fail("unsupported PNM type " + magic);

  const std::size_t width = scan.number();
  const std::size_t height = scan.number();
  const unsigned long maxval = scan.number();
  if (width == 0 || height == 0) scan.fail("zero image size");
  if (maxval == 0 || maxval > 65535) scan.fail("bad maxval");
  if (binary) scan.end_header();
  const bool wide = maxval > 255;

  Tensor image(channels, height, width);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      for (std::size_t c = 0; c < channels; ++c) {
        const unsigned v = scan.sample(binary, wide);
        if (v > maxval) scan.fail("sample exceeds maxval");
        image.at(c, y, x) = static_cast<float>(v) / static_cast<float>(maxval);
      }
    }
  }
  return image;
}

void write_pnm(const Tensor& image, const std::string& path) {
  if (image.channels() != 1 && image.channels() != 3) {
    throw InputError("write_pnm: need 1 or 3 channels");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open " + path + " for writing");
  out << (image.channels() == 1 ? "P5" : "P6") << '\n'
      << image.width() << ' ' << image.height() << "\n255\n";
  std::vector<unsigned char> row(image.width() * image.channels());
  for (std::size_t y = 0; y < image.height(); ++y) {
    for (std::size_t x = 0; x < image.width(); ++x) {
      for (std::size_t c = 0; c < image.channels(); ++c) {
        const float v = std::clamp(image.at(c, y, x), 0.0f, 1.0f);
        row[x * image.channels() + c] = static_cast<unsigned char>(std::lround(v * 255.0f));
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw InputError("failed writing " + path);
}

Tensor to_channels(const Tensor& image, std::size_t channels) {
  if (image.channels() == channels) return image;
  if (image.channels() != 1 && image.channels() != 3) {
    throw InputError("to_channels: source must have 1 or 3 channels");
  }
  Tensor gray(1, image.height(), image.width());
  for (std::size_t y = 0; y < image.height(); ++y) {
    for (std::size_t x = 0; x < image.width(); ++x) {
      gray.at(0, y, x) = image.channels() == 1
                             ? image.at(0, y, x)
                             : 0.299f * image.at(0, y, x) + 0.587f * image.at(1, y, x) +
                                   0.114f * image.at(2, y, x);
    }
  }
  Tensor out(channels, image.height(), image.width());
  for (std::size_t c = 0; c < channels; ++c) {
    std::copy(gray.data().begin(), gray.data().end(), out.plane(c).begin());
  }
  return out;
}

}  // namespace mpp
