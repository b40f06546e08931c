#ifndef MPP_DESCRIPTOR_SET_H_
#define MPP_DESCRIPTOR_SET_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mpp {

// Where a descriptor came from. Coordinates are normalized to the source
// image, so they are comparable across pyramid scales.
struct PatchGeometry {
  std::uint32_t scale = 1;  // 1-based pyramid level
  float center_x = 0.5f;
  float center_y = 0.5f;
  float edge = 1.0f;  // in (0, 1]

  friend bool operator==(const PatchGeometry&, const PatchGeometry&) = default;
};

// Bag of d-dimensional local descriptors with per-entry geometry. Entries are
// kept in (scale, row-major position) order by the extraction code; the
// container itself only checks that scale tags are in [1, num_scales].
class DescriptorSet {
 public:
  DescriptorSet() = default;
  DescriptorSet(std::size_t dim, std::uint32_t num_scales);

  std::size_t dim() const { return dim_; }
  std::uint32_t num_scales() const { return num_scales_; }
  std::size_t size() const { return geometry_.size(); }
  bool empty() const { return geometry_.empty(); }

  void reserve(std::size_t n);
  void append(std::span<const float> values, const PatchGeometry& geometry);
  // Appends every entry of `other` (same dim and scale count).
  void append_all(const DescriptorSet& other);

  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(values_).subspan(i * dim_, dim_);
  }
  std::span<float> row(std::size_t i) {
    return std::span<float>(values_).subspan(i * dim_, dim_);
  }
  const PatchGeometry& geometry(std::size_t i) const { return geometry_[i]; }

  std::span<const float> values() const { return values_; }

  // |x_s| for s = 1..num_scales (index s-1).
  const std::vector<std::size_t>& scale_counts() const { return scale_counts_; }
  std::size_t scale_count(std::uint32_t scale) const;

  // Row indices whose scale tag equals `scale`, ascending.
  std::vector<std::size_t> rows_for_scale(std::uint32_t scale) const;

  // Copy restricted to the given rows (order preserved).
  DescriptorSet select(std::span<const std::size_t> rows) const;

 private:
  std::size_t dim_ = 0;
  std::uint32_t num_scales_ = 0;
  std::vector<float> values_;
  std::vector<PatchGeometry> geometry_;
  std::vector<std::size_t> scale_counts_;
};

// Scales every row to unit l2 norm (zero rows stay zero).
void l2_normalize_rows(DescriptorSet& set);

// "MPPD" container.
void save_descriptors(const DescriptorSet& set, const std::string& path);
DescriptorSet load_descriptors(const std::string& path);

}  // namespace mpp

#endif  // MPP_DESCRIPTOR_SET_H_
