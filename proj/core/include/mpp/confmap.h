#ifndef MPP_CONFMAP_H_
#define MPP_CONFMAP_H_

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mpp/descriptor_set.h"
#include "mpp/gmm.h"
#include "mpp/pooling.h"
#include "mpp/svm.h"

namespace mpp {

// Per-cell mean of the patch scores whose receptive field covers the cell.
struct ConfidenceMap {
  std::string label;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> sum;          // height x width, row-major
  std::vector<std::size_t> count;   // patches per cell; 0 = no data

  bool has_data(std::size_t row, std::size_t col) const { return count[row * width + col] > 0; }
  std::optional<double> value(std::size_t row, std::size_t col) const;
  // Min and max over cells with data; nullopt if there are none.
  std::optional<std::pair<double, double>> range() const;
  // Cell with the largest value (first in row-major order on ties).
  std::optional<std::pair<std::size_t, std::size_t>> argmax() const;
};

// Improved Fisher vector of a single descriptor, tagged as an MPP
// representation so it can be scored by a model trained on MPP vectors.
PooledRepresentation patch_representation(const GmmModel& model,
                                          std::span<const float> descriptor);

// Cells whose centers fall inside the patch's square receptive field. A patch
// that covers no cell center lands on the cell holding its center.
std::vector<std::size_t> covered_cells(const PatchGeometry& patch, std::size_t height,
                                       std::size_t width);

// Scores every descriptor of `set` (already in the GMM's space) with class
// `cls` of `svm` and splats the scores onto a height x width grid.
ConfidenceMap build_map(const DescriptorSet& set, const GmmModel& gmm, const LinearModel& svm,
                        std::size_t cls, std::size_t height, std::size_t width);

// Map from precomputed per-descriptor scores.
ConfidenceMap splat_scores(const DescriptorSet& set, std::span<const double> scores,
                           std::size_t height, std::size_t width);

// 8-bit values after min-max scaling over cells with data. A constant map
// renders as 255; cells without data render as 0.
std::vector<std::uint8_t> render_map(const ConfidenceMap& map);

// Writes a binary PGM (P5) and `<path>.nodata.txt` listing "row col" of every
// cell without data.
void export_map(const ConfidenceMap& map, const std::string& path);

}  // namespace mpp

#endif  // MPP_CONFMAP_H_
