#ifndef MPP_IMAGE_IO_H_
#define MPP_IMAGE_IO_H_

#include <string>

#include "mpp/tensor.h"

namespace mpp {

// Netpbm images: P2/P5 (gray, 1 channel) and P3/P6 (RGB, 3 channels), maxval
// up to 65535. Values are scaled to [0, 1].
Tensor read_pnm(const std::string& path);

// P5 for 1 channel, P6 for 3; values clamped to [0, 1] and quantized to 8 bit.
void write_pnm(const Tensor& image, const std::string& path);

// Converts RGB to luminance (or returns 1-channel input unchanged) and repeats
// it when `channels` > 1.
Tensor to_channels(const Tensor& image, std::size_t channels);

}  // namespace mpp

#endif  // MPP_IMAGE_IO_H_
