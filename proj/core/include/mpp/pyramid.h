#ifndef MPP_PYRAMID_H_
#define MPP_PYRAMID_H_

#include <cstdint>
#include <string>
#include <vector>

#include "mpp/convnet.h"
#include "mpp/descriptor_set.h"
#include "mpp/tensor.h"

namespace mpp {

// How the edge grows from one pyramid level to the next.
//   kEdgeDoubling: edge_s = standard * 2^(s-1)
//   kAreaDoubling: edge_s = ceil(standard * sqrt(2)^(s-1)); with a 227 base and
//                  a stride-32 network this gives the 1, 9, 64, 196, 484, 1156,
//                  2500 per-level activation counts of the Caffe reference model.
enum class ScaleStep { kEdgeDoubling, kAreaDoubling };

ScaleStep parse_scale_step(const std::string& text);
const char* scale_step_name(ScaleStep step);

struct ScalePyramid {
  std::uint32_t num_scales = 1;
  std::uint32_t standard = 227;
  ScaleStep step = ScaleStep::kEdgeDoubling;

  // Edge of level s (1-based).
  std::uint32_t edge(std::uint32_t scale) const;
  std::vector<std::uint32_t> edges() const;
};

// Bilinear resampling with half-pixel centers; borders clamp. Shrinking axes
// are prefiltered with a tent as wide as the shrink ratio.
Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width);

// Horizontal mirror.
Tensor flip_horizontal(const Tensor& image);

// N square images, level s resized to pyramid.edge(s).
std::vector<Tensor> build_pyramid(const Tensor& image, const ScalePyramid& pyramid);
std::vector<Tensor> build_pyramid(const Tensor& image, std::uint32_t num_scales,
                                  std::uint32_t standard);

struct ExtractionOptions {
  ScaleStep step = ScaleStep::kEdgeDoubling;
  // Crop-and-forward every window instead of one dense pass per level.
  bool naive = false;
};

// Dense activations of every pyramid level, merged in (scale, row-major)
// order. `net` may be converted or not; conversion happens internally.
// Levels are resized and processed one at a time.
DescriptorSet extract_all(const NetworkSpec& net, const Tensor& image,
                          std::uint32_t num_scales,
                          const ExtractionOptions& options = {},
                          ForwardStats* stats = nullptr);

// Per-level descriptor counts implied by the network geometry alone.
std::vector<std::size_t> expected_scale_counts(const NetworkSpec& net,
                                               const ScalePyramid& pyramid);

}  // namespace mpp

#endif  // MPP_PYRAMID_H_
