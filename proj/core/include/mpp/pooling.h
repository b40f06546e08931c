#ifndef MPP_POOLING_H_
#define MPP_POOLING_H_

#include <cstdint>
#include <string>
#include <vector>

#include "mpp/descriptor_set.h"
#include "mpp/fisher.h"
#include "mpp/gmm.h"

namespace mpp {

enum class PoolStrategy : std::uint8_t {
  kRawFisher = 0,  // unpooled encode_fv output
  kMpp = 1,        // per-scale FV, per-scale l2, mean over scales, power, l2
  kNfk = 2,        // one FV over every descriptor, power, l2
  kCsf = 3,        // per-scale improved FV concatenated, l2
  kAp = 4,         // mean of raw activation vectors, l2
  kMppSp = 5,      // MPP over {whole, top, middle, bottom} concatenated, l2
};

PoolStrategy parse_pool_strategy(const std::string& text);
const char* pool_strategy_name(PoolStrategy strategy);

// Set of 1-based scale indices (at most 64).
class ScaleMask {
 public:
  ScaleMask() = default;  // every scale
  static ScaleMask all() { return ScaleMask(); }
  static ScaleMask range(std::uint32_t first, std::uint32_t last);
  static ScaleMask only(std::uint32_t scale) { return range(scale, scale); }
  // "1-3", "2", "1,3,5".
  static ScaleMask parse(const std::string& text);

  bool contains(std::uint32_t scale) const {
    return scale >= 1 && scale <= 64 && ((bits_ >> (scale - 1)) & 1u) != 0;
  }
  // Selected scales among 1..num_scales, ascending.
  std::vector<std::uint32_t> scales(std::uint32_t num_scales) const;

 private:
  explicit ScaleMask(std::uint64_t bits) : bits_(bits) {}
  std::uint64_t bits_ = ~0ull;
};

struct PooledRepresentation {
  PoolStrategy strategy = PoolStrategy::kMpp;
  std::size_t num_components = 0;  // GMM K (0 for AP)
  std::size_t dim = 0;             // descriptor dim entering the pooling
  std::vector<double> payload;
  // Provenance: scales that were pooled and their descriptor counts.
  std::vector<std::uint32_t> scales;
  std::vector<std::size_t> scale_counts;
  // One flag per block for MPP+SP (whole, top, middle, bottom).
  std::vector<bool> zero_blocks;
  bool zero = false;  // final payload had zero norm
  bool power_normalized = false;
  bool l2_normalized = false;

  std::size_t size() const { return payload.size(); }
};

// Multi-scale pyramid pooling. Every selected scale in 1..set.num_scales()
// must hold at least one descriptor (InputError otherwise).
PooledRepresentation pool_mpp(const GmmModel& model, const DescriptorSet& set,
                              const ScaleMask& mask = {});

// Naive pooling: each descriptor weighted 1/|X| regardless of scale.
PooledRepresentation pool_nfk(const GmmModel& model, const DescriptorSet& set,
                              const ScaleMask& mask = {});

// Concatenation of scale-wise improved Fisher vectors (length N * 2Kd).
PooledRepresentation pool_csf(const GmmModel& model, const DescriptorSet& set,
                              const ScaleMask& mask = {});

// Average of raw activation vectors (every row of `vectors`), l2-normalized.
PooledRepresentation pool_ap(const DescriptorSet& vectors);

// MPP per vertical region, routed by center_y: whole, top [0, 1/3),
// middle [1/3, 2/3), bottom [2/3, 1]. Inside a region only scales that have
// descriptors there are averaged. Empty regions give zero blocks (flagged).
PooledRepresentation pool_mpp_sp(const GmmModel& model, const DescriptorSet& set,
                                 const ScaleMask& mask = {});

enum class SpatialRegion { kWhole = 0, kTop = 1, kMiddle = 2, kBottom = 3 };
bool in_region(const PatchGeometry& geometry, SpatialRegion region);

// Dispatch for the Fisher-based strategies (not AP).
PooledRepresentation pool(PoolStrategy strategy, const GmmModel& model,
                          const DescriptorSet& set, const ScaleMask& mask = {});

// Expected payload length.
std::size_t pooled_length(PoolStrategy strategy, std::size_t num_components, std::size_t dim,
                          std::size_t num_scales);

// "MPPF" records. A file may hold several records back to back.
void save_representation(const PooledRepresentation& rep, const std::string& path);
void save_representations(const std::vector<PooledRepresentation>& reps,
                          const std::string& path);
std::vector<PooledRepresentation> load_representations(const std::string& path);
PooledRepresentation load_representation(const std::string& path);

// Wraps an unpooled Fisher vector so it can be stored as a record.
PooledRepresentation as_representation(const FisherVector& fv);

}  // namespace mpp

#endif  // MPP_POOLING_H_
