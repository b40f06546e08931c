#include "mpp/confmap.h"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "mpp/errors.h"
#include "mpp/fisher.h"
#include "mpp/parallel.h"

namespace mpp {

std::optional<double> ConfidenceMap::value(std::size_t row, std::size_t col) const {
  const std::size_t i = row * width + col;
  if (count[i] == 0) return std::nullopt;
  return sum[i] / static_cast<double>(count[i]);
}

std::optional<std::pair<double, double>> ConfidenceMap::range() const {
  std::optional<std::pair<double, double>> r;
  for (std::size_t i = 0; i < height; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      const auto v = value(i, j);
      if (!v) continue;
      if (!r) {
        r = std::make_pair(*v, *v);
      } else {
        r->first = std::min(r->first, *v);
        r->second = std::max(r->second, *v);
      }
    }
  }
  return r;
}

std::optional<std::pair<std::size_t, std::size_t>> ConfidenceMap::argmax() const {
  std::optional<std::pair<std::size_t, std::size_t>> best;
  double best_value = 0.0;
  for (std::size_t i = 0; i < height; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      const auto v = value(i, j);
      if (v && (!best || *v > best_value)) {
        best = std::make_pair(i, j);
        best_value = *v;
      }
    }
  }
  return best;
}

PooledRepresentation patch_representation(const GmmModel& model,
                                          std::span<const float> descriptor) {
  DescriptorSet single(descriptor.size(), 1);
  single.append(descriptor, PatchGeometry{});
  const FisherVector fv = improved_fisher(encode_fv(model, single));
  PooledRepresentation rep;
  rep.strategy = PoolStrategy::kMpp;
  rep.num_components = model.num_components;
  rep.dim = model.dim;
  rep.payload = fv.values;
  rep.scales = {1};
  rep.scale_counts = {1};
  rep.zero = fv.zero;
  rep.power_normalized = rep.l2_normalized = true;
  return rep;
}

std::vector<std::size_t> covered_cells(const PatchGeometry& patch, std::size_t height,
                                       std::size_t width) {
  const double half = 0.5 * patch.edge;
  const double x0 = patch.center_x - half, x1 = patch.center_x + half;
  const double y0 = patch.center_y - half, y1 = patch.center_y + half;
  std::vector<std::size_t> cells;
  for (std::size_t i = 0; i < height; ++i) {
    const double cy = (static_cast<double>(i) + 0.5) / static_cast<double>(height);
    if (cy < y0 || cy > y1) continue;
    for (std::size_t j = 0; j < width; ++j) {
      const double cx = (static_cast<double>(j) + 0.5) / static_cast<double>(width);
      if (cx >= x0 && cx <= x1) cells.push_back(i * width + j);
    }
  }
  if (cells.empty()) {
    const auto clamp_cell = [](double c, std::size_t n) {
      const auto k = static_cast<std::ptrdiff_t>(std::floor(c * static_cast<double>(n)));
      return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(k, 0, static_cast<std::ptrdiff_t>(n) - 1));
    };
    cells.push_back(clamp_cell(patch.center_y, height) * width + clamp_cell(patch.center_x, width));
  }
  return cells;
}

ConfidenceMap splat_scores(const DescriptorSet& set, std::span<const double> scores,
                           std::size_t height, std::size_t width) {
  if (height < 1 || width < 1) throw InputError("confidence map grid must be at least 1x1");
  if (scores.size() != set.size()) throw InputError("splat_scores: one score per descriptor");
  // Contributions are summed in sorted order per cell so the map does not
  // depend on descriptor order.
  std::vector<std::pair<std::size_t, double>> contributions;
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (std::size_t cell : covered_cells(set.geometry(i), height, width)) {
      contributions.emplace_back(cell, scores[i]);
    }
  }
  std::sort(contributions.begin(), contributions.end());
  ConfidenceMap map;
  map.height = height;
  map.width = width;
  map.sum.assign(height * width, 0.0);
  map.count.assign(height * width, 0);
  for (const auto& [cell, s] : contributions) {
    map.sum[cell] += s;
    ++map.count[cell];
  }
  return map;
}

ConfidenceMap build_map(const DescriptorSet& set, const GmmModel& gmm, const LinearModel& svm,
                        std::size_t cls, std::size_t height, std::size_t width) {
  if (height < 1 || width < 1) throw InputError("confidence map grid must be at least 1x1");
  if (cls >= svm.num_classes()) throw InputError("class index out of range");
  if (svm.dim != 2 * gmm.num_components * gmm.dim) {
    throw InputError("SVM dimension " + std::to_string(svm.dim) +
                     " does not match a single Fisher vector (2Kd = " +
                     std::to_string(2 * gmm.num_components * gmm.dim) +
                     "); confidence maps need an MPP/NFK model");
  }
  std::vector<double> scores(set.size());
  parallel_for(set.size(), [&](std::size_t i) {
    const PooledRepresentation rep = patch_representation(gmm, set.row(i));
    scores[i] = score(svm, rep)[cls];
  });
  ConfidenceMap map = splat_scores(set, scores, height, width);
  map.label = svm.classes[cls];
  return map;
}

std::vector<std::uint8_t> render_map(const ConfidenceMap& map) {
  std::vector<std::uint8_t> pixels(map.height * map.width, 0);
  const auto r = map.range();
  if (!r) return pixels;
  const double span = r->second - r->first;
  for (std::size_t i = 0; i < map.height; ++i) {
    for (std::size_t j = 0; j < map.width; ++j) {
      const auto v = map.value(i, j);
      if (!v) continue;
      const double t = span > 0.0 ? (*v - r->first) / span : 1.0;
      pixels[i * map.width + j] = static_cast<std::uint8_t>(std::lround(255.0 * t));
    }
  }
  return pixels;
}

void export_map(const ConfidenceMap& map, const std::string& path) {
  const auto pixels = render_map(map);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open " + path + " for writing");
  out << "P5\n" << map.width << ' ' << map.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw InputError("failed writing " + path);

  std::ofstream side(path + ".nodata.txt");
  if (!side) throw InputError("cannot open " + path + ".nodata.txt for writing");
  for (std::size_t i = 0; i < map.height; ++i) {
    for (std::size_t j = 0; j < map.width; ++j) {
      if (!map.has_data(i, j)) side << i << ' ' << j << '\n';
    }
  }
}

}  // namespace mpp
