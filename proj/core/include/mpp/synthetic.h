#ifndef MPP_SYNTHETIC_H_
#define MPP_SYNTHETIC_H_

#include <cstdint>
#include <string>

#include "mpp/tensor.h"

namespace mpp {

// Class information lives only in a smooth global layout: an intensity ramp
// whose orientation is pi * class / num_classes (sign and small angle jitter
// random per image). On top sits class-independent fine texture (a few
// gratings of random orientation, wavelength and contrast per image) that the
// antialiased pyramid removes at coarse levels but that dominates windows at
// the finest levels.
struct ScaleNoiseParams {
  std::size_t size = 256;
  std::size_t num_classes = 3;
  double layout_contrast = 0.25;
  double orientation_jitter = 0.15;  // radians
  std::size_t gratings = 2;
  double texture_contrast_min = 0.20;
  double texture_contrast_max = 0.50;
  double wavelength_min = 3.0;       // pixels at `size`
  double wavelength_max = 6.0;
  double pixel_noise = 0.03;
};

// Sets fields from "key=value,key=value" (keys as in the struct).
void apply_scale_noise_options(ScaleNoiseParams& params, const std::string& options);

Tensor make_scale_noise_image(std::size_t cls, std::uint64_t seed,
                              const ScaleNoiseParams& params = {});

struct Box {
  float x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // normalized, [x0, x1) x [y0, y1)
  bool contains(float x, float y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

struct PlantedSquareParams {
  std::size_t size = 128;
  double min_edge = 0.18;
  double max_edge = 0.28;
  std::size_t distractors = 6;
  double pixel_noise = 0.04;
};

// Textured background with dim distractor blobs; when `present`, a bright
// axis-aligned square is drawn and its box returned through `square`.
Tensor make_planted_square_image(bool present, std::uint64_t seed, Box* square = nullptr,
                                 const PlantedSquareParams& params = {});

}  // namespace mpp

#endif  // MPP_SYNTHETIC_H_
