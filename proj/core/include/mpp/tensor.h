#ifndef MPP_TENSOR_H_
#define MPP_TENSOR_H_

#include <cstddef>
#include <span>
#include <vector>

namespace mpp {

struct Shape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t size() const { return channels * height * width; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

// Dense channels x height x width array, channel-major.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f)
      : shape_(shape), data_(shape.size(), fill) {}
  Tensor(std::size_t channels, std::size_t height, std::size_t width,
         float fill = 0.0f)
      : Tensor(Shape{channels, height, width}, fill) {}

  const Shape& shape() const { return shape_; }
  std::size_t channels() const { return shape_.channels; }
  std::size_t height() const { return shape_.height; }
  std::size_t width() const { return shape_.width; }
  std::size_t size() const { return data_.size(); }

  float& at(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * shape_.height + y) * shape_.width + x];
  }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * shape_.height + y) * shape_.width + x];
  }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  std::span<float> plane(std::size_t c) {
    return std::span<float>(data_).subspan(c * plane_size(), plane_size());
  }
  std::span<const float> plane(std::size_t c) const {
    return std::span<const float>(data_).subspan(c * plane_size(),
                                                 plane_size());
  }

  // Copies the window [y0, y0+h) x [x0, x0+w) of every channel.
  Tensor crop(std::size_t y0, std::size_t x0, std::size_t h,
              std::size_t w) const;

  bool all_finite() const;

 private:
  std::size_t plane_size() const { return shape_.height * shape_.width; }

  Shape shape_;
  std::vector<float> data_;
};

}  // namespace mpp

#endif  // MPP_TENSOR_H_
