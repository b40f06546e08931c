#include "mpp/pyramid.h"

#include <algorithm>
#include <cmath>

#include "mpp/errors.h"

namespace mpp {

ScaleStep parse_scale_step(const std::string& text) {
  if (text == "2" || text == "edge" || text == "edge-doubling") return ScaleStep::kEdgeDoubling;
  if (text == "sqrt2" || text == "area" || text == "area-doubling") return ScaleStep::kAreaDoubling;
  throw ConfigError("unknown scale step '" + text + "' (expected 2 or sqrt2)");
}

const char* scale_step_name(ScaleStep step) {
  return step == ScaleStep::kEdgeDoubling ? "2" : "sqrt2";
}

std::uint32_t ScalePyramid::edge(std::uint32_t scale) const {
  if (scale < 1 || scale > num_scales) {
    throw InputError("scale " + std::to_string(scale) + " outside [1, " +
                     std::to_string(num_scales) + "]");
  }
  if (step == ScaleStep::kEdgeDoubling) return standard << (scale - 1);
  // Even steps are exact powers of two; odd ones round up.
  const std::uint32_t base = standard << ((scale - 1) / 2);
  if ((scale - 1) % 2 == 0) return base;
  return static_cast<std::uint32_t>(std::ceil(base * std::sqrt(2.0)));
}

std::vector<std::uint32_t> ScalePyramid::edges() const {
  std::vector<std::uint32_t> out;
  for (std::uint32_t s = 1; s <= num_scales; ++s) out.push_back(edge(s));
  return out;
}

namespace {

// Separable resampling for shrinking axes: each output sample averages the
// source with a tent whose half-width equals the shrink ratio.
struct Kernel {
  std::size_t first = 0;
  std::vector<float> weights;
};

std::vector<Kernel> tent_kernels(std::size_t src, std::size_t dst) {
  const double ratio = static_cast<double>(src) / static_cast<double>(dst);
  const double support = std::max(1.0, ratio);
  std::vector<Kernel> out(dst);
  for (std::size_t d = 0; d < dst; ++d) {
    const double center = (static_cast<double>(d) + 0.5) * ratio - 0.5;
    const auto lo = static_cast<std::ptrdiff_t>(std::ceil(center - support));
    const auto hi = static_cast<std::ptrdiff_t>(std::floor(center + support));
    std::vector<double> w(src, 0.0);
    double total = 0.0;
    for (std::ptrdiff_t i = lo; i <= hi; ++i) {
      const double t = 1.0 - std::abs(static_cast<double>(i) - center) / support;
      if (t <= 0.0) continue;
      const auto k = static_cast<std::size_t>(
          std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(src) - 1));
      w[k] += t;
      total += t;
    }
    std::size_t first = 0;
    while (w[first] == 0.0) ++first;
    std::size_t last = src - 1;
    while (w[last] == 0.0) --last;
    out[d].first = first;
    for (std::size_t k = first; k <= last; ++k) {
      out[d].weights.push_back(static_cast<float>(w[k] / total));
    }
  }
  return out;
}

Tensor resample_tent(const Tensor& image, std::size_t height, std::size_t width) {
  const auto ky = tent_kernels(image.height(), height);
  const auto kx = tent_kernels(image.width(), width);
  Tensor rows(image.channels(), image.height(), width);
  for (std::size_t c = 0; c < image.channels(); ++c) {
    for (std::size_t y = 0; y < image.height(); ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const Kernel& k = kx[x];
        float acc = 0.0f;
        for (std::size_t t = 0; t < k.weights.size(); ++t) {
          acc += k.weights[t] * image.at(c, y, k.first + t);
        }
        rows.at(c, y, x) = acc;
      }
    }
  }
  Tensor out(image.channels(), height, width);
  for (std::size_t c = 0; c < image.channels(); ++c) {
    for (std::size_t y = 0; y < height; ++y) {
      const Kernel& k = ky[y];
      for (std::size_t x = 0; x < width; ++x) {
        float acc = 0.0f;
        for (std::size_t t = 0; t < k.weights.size(); ++t) {
          acc += k.weights[t] * rows.at(c, k.first + t, x);
        }
        out.at(c, y, x) = acc;
      }
    }
  }
  return out;
}

}  // namespace

Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0 || image.size() == 0) {
    throw InputError("resize_bilinear: empty source or target");
  }
  if (height == image.height() && width == image.width()) return image;
  if (height < image.height() || width < image.width()) {
    return resample_tent(image, height, width);
  }

  struct Tap {
    std::size_t i0, i1;
    float frac;
  };
  auto taps = [](std::size_t src, std::size_t dst) {
    std::vector<Tap> out(dst);
    const double ratio = static_cast<double>(src) / static_cast<double>(dst);
    for (std::size_t d = 0; d < dst; ++d) {
      double pos = (static_cast<double>(d) + 0.5) * ratio - 0.5;
      pos = std::clamp(pos, 0.0, static_cast<double>(src - 1));
      const auto i0 = static_cast<std::size_t>(std::floor(pos));
      const std::size_t i1 = std::min(i0 + 1, src - 1);
      out[d] = {i0, i1, static_cast<float>(pos - static_cast<double>(i0))};
    }
    return out;
  };
  const auto ys = taps(image.height(), height);
  const auto xs = taps(image.width(), width);

  Tensor out(image.channels(), height, width);
  for (std::size_t c = 0; c < image.channels(); ++c) {
    for (std::size_t y = 0; y < height; ++y) {
      const Tap& ty = ys[y];
      for (std::size_t x = 0; x < width; ++x) {
        const Tap& tx = xs[x];
        const float a = image.at(c, ty.i0, tx.i0);
        const float b = image.at(c, ty.i0, tx.i1);
        const float p = image.at(c, ty.i1, tx.i0);
        const float q = image.at(c, ty.i1, tx.i1);
        // Lerps of equal endpoints return the endpoint exactly.
        const float top = a + (b - a) * tx.frac;
        const float bottom = p + (q - p) * tx.frac;
        out.at(c, y, x) = top + (bottom - top) * ty.frac;
      }
    }
  }
  return out;
}

Tensor flip_horizontal(const Tensor& image) {
  Tensor out(image.shape());
  for (std::size_t c = 0; c < image.channels(); ++c) {
    for (std::size_t y = 0; y < image.height(); ++y) {
      for (std::size_t x = 0; x < image.width(); ++x) {
        out.at(c, y, x) = image.at(c, y, image.width() - 1 - x);
      }
    }
  }
  return out;
}

std::vector<Tensor> build_pyramid(const Tensor& image, const ScalePyramid& pyramid) {
  if (pyramid.num_scales < 1) throw InputError("pyramid needs at least one scale");
  std::vector<Tensor> levels;
  levels.reserve(pyramid.num_scales);
  for (std::uint32_t s = 1; s <= pyramid.num_scales; ++s) {
    const std::uint32_t e = pyramid.edge(s);
    levels.push_back(resize_bilinear(image, e, e));
  }
  return levels;
}

std::vector<Tensor> build_pyramid(const Tensor& image, std::uint32_t num_scales,
                                  std::uint32_t standard) {
  return build_pyramid(image, ScalePyramid{num_scales, standard, ScaleStep::kEdgeDoubling});
}

DescriptorSet extract_all(const NetworkSpec& net, const Tensor& image,
                          std::uint32_t num_scales, const ExtractionOptions& options,
                          ForwardStats* stats) {
  if (num_scales < 1) throw InputError("extract_all: need at least one scale");
  const NetworkSpec converted = convert_fc_to_conv(net);
  const ScalePyramid pyramid{num_scales, net.standard_size, options.step};
  const Shape target = dense_output_shape(converted, net.standard_size);
  DescriptorSet set(target.channels, num_scales);
  for (std::uint32_t s = 1; s <= num_scales; ++s) {
    const std::uint32_t e = pyramid.edge(s);
    const Tensor level = resize_bilinear(image, e, e);
    if (options.naive) {
      naive_dense_activations(net, level, s, set, stats);
    } else {
      dense_activations(converted, level, s, set, stats);
    }
  }
  return set;
}

std::vector<std::size_t> expected_scale_counts(const NetworkSpec& net,
                                               const ScalePyramid& pyramid) {
  std::vector<std::size_t> counts;
  for (std::uint32_t s = 1; s <= pyramid.num_scales; ++s) {
    const Shape map = dense_output_shape(net, pyramid.edge(s));
    counts.push_back(map.height * map.width);
  }
  return counts;
}

}  // namespace mpp
