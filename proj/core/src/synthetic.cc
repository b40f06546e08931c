#include "mpp/synthetic.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "mpp/errors.h"

#include "mpp/random.h"

namespace mpp {
namespace {

// Signed distance (pixels) to a shape of the given family centered at (cx, cy)
// with circumradius r.
double shape_distance(std::size_t family, double x, double y, double cx, double cy, double r) {
  const double dx = x - cx, dy = y - cy;
  switch (family % 3) {
    case 0:
      return std::hypot(dx, dy) - r;
    case 1: {
      const double h = r / std::numbers::sqrt2;
      return std::max(std::abs(dx), std::abs(dy)) - h;
    }
    default: {
      // Upward equilateral triangle: max over the three edge half-planes.
      const double inr = 0.5 * r;
      double d = dy - inr;
      for (double angle : {7.0 * std::numbers::pi / 6.0, 11.0 * std::numbers::pi / 6.0}) {
        d = std::max(d, dx * std::cos(angle) + dy * std::sin(angle) - inr);
      }
      return d;
    }
  }
}

// Adds contrast * coverage of the shape, anti-aliased over one pixel.
void draw_shape(Tensor& image, std::size_t family, double cx, double cy, double r,
                double contrast) {
  const auto n = static_cast<std::ptrdiff_t>(image.width());
  const auto lo = [&](double c) { return std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(c - r - 2)); };
  const auto hi = [&](double c) { return std::min<std::ptrdiff_t>(n - 1, static_cast<std::ptrdiff_t>(c + r + 2)); };
  for (std::ptrdiff_t y = lo(cy); y <= hi(cy); ++y) {
    for (std::ptrdiff_t x = lo(cx); x <= hi(cx); ++x) {
      const double d = shape_distance(family, x + 0.5, y + 0.5, cx, cy, r);
      const double coverage = std::clamp(0.5 - d, 0.0, 1.0);
      if (coverage > 0.0) {
        image.at(0, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) +=
            static_cast<float>(contrast * coverage);
      }
    }
  }
}

void add_noise_and_clamp(Tensor& image, Rng& rng, double sigma) {
  for (float& v : image.data()) {
    v = std::clamp(v + static_cast<float>(sigma * rng.normal()), 0.0f, 1.0f);
  }
}

}  // namespace

void apply_scale_noise_options(ScaleNoiseParams& p, const std::string& options) {
  std::stringstream ss(options);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("synthetic option '" + item + "' is not key=value");
    const std::string key = item.substr(0, eq);
    double v = 0.0;
    try {
      v = std::stod(item.substr(eq + 1));
    } catch (const std::logic_error&) {
      throw ConfigError("synthetic option '" + item + "' has a bad value");
    }
    if (key == "size") p.size = static_cast<std::size_t>(v);
    else if (key == "layout_contrast") p.layout_contrast = v;
    else if (key == "orientation_jitter") p.orientation_jitter = v;
    else if (key == "gratings") p.gratings = static_cast<std::size_t>(v);
    else if (key == "texture_contrast_min") p.texture_contrast_min = v;
    else if (key == "texture_contrast_max") p.texture_contrast_max = v;
    else if (key == "wavelength_min") p.wavelength_min = v;
    else if (key == "wavelength_max") p.wavelength_max = v;
    else if (key == "pixel_noise") p.pixel_noise = v;
    else throw ConfigError("unknown synthetic option '" + key + "'");
  }
  if (p.size < 8) throw ConfigError("synthetic image size must be >= 8");
}

Tensor make_scale_noise_image(std::size_t cls, std::uint64_t seed, const ScaleNoiseParams& p) {
  Rng rng(seed);
  const double n = static_cast<double>(p.size);
  Tensor image(1, p.size, p.size);

  const double theta = std::numbers::pi * static_cast<double>(cls % std::max<std::size_t>(p.num_classes, 1)) /
                           static_cast<double>(std::max<std::size_t>(p.num_classes, 1)) +
                       rng.uniform(-p.orientation_jitter, p.orientation_jitter);
  const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
  const double ux = std::cos(theta), uy = std::sin(theta);

  struct Grating {
    double kx, ky, phase, amplitude;
  };
  std::vector<Grating> gratings;
  const double texture = rng.uniform(p.texture_contrast_min, p.texture_contrast_max);
  for (std::size_t g = 0; g < p.gratings; ++g) {
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const double freq = 2.0 * std::numbers::pi / rng.uniform(p.wavelength_min, p.wavelength_max);
    gratings.push_back({freq * std::cos(angle), freq * std::sin(angle),
                        rng.uniform(0.0, 2.0 * std::numbers::pi),
                        texture / static_cast<double>(std::max<std::size_t>(p.gratings, 1))});
  }

  for (std::size_t y = 0; y < p.size; ++y) {
    for (std::size_t x = 0; x < p.size; ++x) {
      const double fx = (x + 0.5) / n - 0.5, fy = (y + 0.5) / n - 0.5;
      double v = 0.5 + sign * p.layout_contrast * std::sin(std::numbers::pi * (fx * ux + fy * uy));
      for (const Grating& g : gratings) {
        v += g.amplitude * std::sin(g.kx * (x + 0.5) + g.ky * (y + 0.5) + g.phase);
      }
      image.at(0, y, x) = static_cast<float>(v);
    }
  }
  add_noise_and_clamp(image, rng, p.pixel_noise);
  return image;
}

Tensor make_planted_square_image(bool present, std::uint64_t seed, Box* square,
                                 const PlantedSquareParams& p) {
  Rng rng(seed);
  const double n = static_cast<double>(p.size);
  Tensor image(1, p.size, p.size);
  // Smooth background: random linear ramp.
  const double gx = rng.uniform(-0.15, 0.15), gy = rng.uniform(-0.15, 0.15);
  for (std::size_t y = 0; y < p.size; ++y) {
    for (std::size_t x = 0; x < p.size; ++x) {
      image.at(0, y, x) = static_cast<float>(0.3 + gx * (x / n - 0.5) + gy * (y / n - 0.5));
    }
  }
  for (std::size_t i = 0; i < p.distractors; ++i) {
    draw_shape(image, 0, rng.uniform(0.0, n), rng.uniform(0.0, n), n * rng.uniform(0.03, 0.08),
               rng.uniform(-0.2, 0.25));
  }
  Box box;
  if (present) {
    const double edge = n * rng.uniform(p.min_edge, p.max_edge);
    const double x0 = rng.uniform(0.0, n - edge);
    const double y0 = rng.uniform(0.0, n - edge);
    for (std::size_t y = 0; y < p.size; ++y) {
      for (std::size_t x = 0; x < p.size; ++x) {
        if (x + 0.5 >= x0 && x + 0.5 < x0 + edge && y + 0.5 >= y0 && y + 0.5 < y0 + edge) {
          image.at(0, y, x) = 0.95f;
        }
      }
    }
    box = {static_cast<float>(x0 / n), static_cast<float>(y0 / n),
           static_cast<float>((x0 + edge) / n), static_cast<float>((y0 + edge) / n)};
  }
  if (square) *square = box;
  add_noise_and_clamp(image, rng, p.pixel_noise);
  return image;
}

}  // namespace mpp
