#include "mpp/tensor.h"

#include <algorithm>
#include <cmath>

#include "mpp/errors.h"

namespace mpp {

Tensor Tensor::crop(std::size_t y0, std::size_t x0, std::size_t h,
                    std::size_t w) const {
  if (y0 + h > height() || x0 + w > width()) {
    throw InputError("crop window exceeds tensor bounds");
  }
  Tensor out(channels(), h, w);
  for (std::size_t c = 0; c < channels(); ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      const float* src = &data_[(c * height() + y0 + y) * width() + x0];
      std::copy(src, src + w, &out.at(c, y, 0));
    }
  }
  return out;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](float v) { return std::isfinite(v); });
}

}  // namespace mpp
