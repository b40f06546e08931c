#include "mpp/descriptor_set.h"

#include <algorithm>
#include <cmath>

#include "mpp/binary_io.h"
#include "mpp/errors.h"

namespace mpp {
namespace {

constexpr std::uint32_t kDescriptorVersion = 1;

}  // namespace

DescriptorSet::DescriptorSet(std::size_t dim, std::uint32_t num_scales)
    : dim_(dim), num_scales_(num_scales), scale_counts_(num_scales, 0) {
  if (dim == 0) throw InputError("descriptor dimension must be positive");
  if (num_scales == 0) throw InputError("descriptor set needs >= 1 scale");
}

void DescriptorSet::reserve(std::size_t n) {
  values_.reserve(n * dim_);
  geometry_.reserve(n);
}

void DescriptorSet::append(std::span<const float> values,
                           const PatchGeometry& geometry) {
  if (values.size() != dim_) {
    throw InputError("descriptor has dim " + std::to_string(values.size()) +
                     ", set expects " + std::to_string(dim_));
  }
  if (geometry.scale < 1 || geometry.scale > num_scales_) {
    throw InputError("scale tag " + std::to_string(geometry.scale) +
                     " outside [1, " + std::to_string(num_scales_) + "]");
  }
  values_.insert(values_.end(), values.begin(), values.end());
  geometry_.push_back(geometry);
  ++scale_counts_[geometry.scale - 1];
}

void DescriptorSet::append_all(const DescriptorSet& other) {
  if (other.dim_ != dim_ || other.num_scales_ != num_scales_) {
    throw InputError("append_all: descriptor sets are not compatible");
  }
  values_.insert(values_.end(), other.values_.begin(), other.values_.end());
  geometry_.insert(geometry_.end(), other.geometry_.begin(),
                   other.geometry_.end());
  for (std::size_t s = 0; s < num_scales_; ++s) {
    scale_counts_[s] += other.scale_counts_[s];
  }
}

std::size_t DescriptorSet::scale_count(std::uint32_t scale) const {
  if (scale < 1 || scale > num_scales_) return 0;
  return scale_counts_[scale - 1];
}

std::vector<std::size_t> DescriptorSet::rows_for_scale(
    std::uint32_t scale) const {
  std::vector<std::size_t> rows;
  rows.reserve(scale_count(scale));
  for (std::size_t i = 0; i < geometry_.size(); ++i) {
    if (geometry_[i].scale == scale) rows.push_back(i);
  }
  return rows;
}

DescriptorSet DescriptorSet::select(std::span<const std::size_t> rows) const {
  DescriptorSet out(dim_, num_scales_);
  out.reserve(rows.size());
  for (std::size_t r : rows) out.append(row(r), geometry_.at(r));
  return out;
}

void l2_normalize_rows(DescriptorSet& set) {
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto row = set.row(i);
    double ss = 0.0;
    for (float v : row) ss += static_cast<double>(v) * v;
    if (ss == 0.0) continue;
    const double inv = 1.0 / std::sqrt(ss);
    for (float& v : row) v = static_cast<float>(v * inv);
  }
}

void save_descriptors(const DescriptorSet& set, const std::string& path) {
  BinaryWriter w(path);
  w.magic("MPPD");
  w.u32(kDescriptorVersion);
  w.u32(static_cast<std::uint32_t>(set.dim()));
  w.u32(set.num_scales());
  for (std::size_t c : set.scale_counts()) w.u64(c);
  for (std::size_t i = 0; i < set.size(); ++i) {
    w.f32_array(set.row(i));
    const PatchGeometry& g = set.geometry(i);
    w.u32(g.scale);
    w.f32(g.center_x);
    w.f32(g.center_y);
    w.f32(g.edge);
  }
  w.close();
}

DescriptorSet load_descriptors(const std::string& path) {
  BinaryReader r(path);
  r.expect_magic("MPPD");
  const std::uint32_t version = r.u32();
  if (version != kDescriptorVersion) {
    throw FormatError(path + ": unsupported MPPD version " +
                      std::to_string(version));
  }
  const std::uint32_t dim = r.u32();
  const std::uint32_t num_scales = r.u32();
  if (dim == 0 || num_scales == 0 || num_scales > 64) {
    throw FormatError(path + ": bad MPPD header");
  }
  std::vector<std::uint64_t> counts(num_scales);
  std::uint64_t total = 0;
  for (auto& c : counts) {
    c = r.u64();
    total += c;
  }
  DescriptorSet set(dim, num_scales);
  set.reserve(total);
  for (std::uint64_t i = 0; i < total; ++i) {
    const auto values = r.f32_array(dim);
    PatchGeometry g;
    g.scale = r.u32();
    g.center_x = r.f32();
    g.center_y = r.f32();
    g.edge = r.f32();
    set.append(values, g);
  }
  for (std::uint32_t s = 1; s <= num_scales; ++s) {
    if (set.scale_count(s) != counts[s - 1]) {
      throw FormatError(path + ": per-scale counts disagree with entries");
    }
  }
  return set;
}

}  // namespace mpp
