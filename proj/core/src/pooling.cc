#include "mpp/pooling.h"

#include <algorithm>
#include <sstream>

#include "mpp/binary_io.h"
#include "mpp/errors.h"
#include "mpp/parallel.h"

namespace mpp {
namespace {

constexpr std::uint32_t kRepresentationVersion = 1;

struct ScaleRows {
  std::uint32_t scale;
  std::vector<std::size_t> rows;
};

// Rows of each selected scale, optionally filtered by a region predicate.
std::vector<ScaleRows> group_by_scale(const DescriptorSet& set, const ScaleMask& mask,
                                      SpatialRegion region = SpatialRegion::kWhole) {
  const auto scales = mask.scales(set.num_scales());
  if (scales.empty()) throw InputError("scale mask selects no scale of the descriptor set");
  std::vector<ScaleRows> groups;
  for (std::uint32_t s : scales) groups.push_back({s, {}});
  for (std::size_t i = 0; i < set.size(); ++i) {
    const PatchGeometry& g = set.geometry(i);
    if (!mask.contains(g.scale) || !in_region(g, region)) continue;
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const ScaleRows& sr) { return sr.scale == g.scale; });
    it->rows.push_back(i);
  }
  return groups;
}

void require_nonempty(const std::vector<ScaleRows>& groups) {
  for (const auto& g : groups) {
    if (g.rows.empty()) {
      throw InputError("scale " + std::to_string(g.scale) + " has no descriptors");
    }
  }
}

PooledRepresentation start(PoolStrategy strategy, const GmmModel& model,
                           const std::vector<ScaleRows>& groups) {
  PooledRepresentation rep;
  rep.strategy = strategy;
  rep.num_components = model.num_components;
  rep.dim = model.dim;
  for (const auto& g : groups) {
    rep.scales.push_back(g.scale);
    rep.scale_counts.push_back(g.rows.size());
  }
  return rep;
}

// Per-scale unnormalized FVs, encoded concurrently and kept in scale order.
std::vector<FisherVector> per_scale_fvs(const GmmModel& model, const DescriptorSet& set,
                                        const std::vector<ScaleRows>& groups) {
  std::vector<FisherVector> fvs(groups.size());
  parallel_for(groups.size(), [&](std::size_t i) {
    fvs[i] = encode_fv(model, set, groups[i].rows);
  });
  return fvs;
}

// Mean of the l2-normalized FVs of the non-empty groups, then power + l2.
// Returns an all-zero vector (zero flag set) if every group is empty.
std::vector<double> mpp_payload(const GmmModel& model, const DescriptorSet& set,
                                std::vector<ScaleRows> groups, bool* zero) {
  std::erase_if(groups, [](const ScaleRows& g) { return g.rows.empty(); });
  const std::size_t length = 2 * model.num_components * model.dim;
  std::vector<double> avg(length, 0.0);
  if (groups.empty()) {
    *zero = true;
    return avg;
  }
  const auto fvs = per_scale_fvs(model, set, groups);
  const double inv_n = 1.0 / static_cast<double>(fvs.size());
  for (const FisherVector& fv : fvs) {
    const FisherVector unit = l2_normalize(fv);
    for (std::size_t i = 0; i < length; ++i) avg[i] += unit.values[i] * inv_n;
  }
  power_normalize(avg);
  *zero = l2_normalize(std::span<double>(avg)) == 0.0;
  return avg;
}

}  // namespace

PoolStrategy parse_pool_strategy(const std::string& text) {
  if (text == "mpp") return PoolStrategy::kMpp;
  if (text == "nfk") return PoolStrategy::kNfk;
  if (text == "csf") return PoolStrategy::kCsf;
  if (text == "ap") return PoolStrategy::kAp;
  if (text == "mpp-sp" || text == "mpp+sp") return PoolStrategy::kMppSp;
  if (text == "raw") return PoolStrategy::kRawFisher;
  throw ConfigError("unknown pooling strategy '" + text + "' (mpp, nfk, csf, ap, mpp-sp)");
}

const char* pool_strategy_name(PoolStrategy strategy) {
  switch (strategy) {
    case PoolStrategy::kRawFisher: return "raw";
    case PoolStrategy::kMpp: return "mpp";
    case PoolStrategy::kNfk: return "nfk";
    case PoolStrategy::kCsf: return "csf";
    case PoolStrategy::kAp: return "ap";
    case PoolStrategy::kMppSp: return "mpp-sp";
  }
  return "unknown";
}

ScaleMask ScaleMask::range(std::uint32_t first, std::uint32_t last) {
  if (first < 1 || last > 64 || first > last) {
    throw InputError("invalid scale range " + std::to_string(first) + "-" + std::to_string(last));
  }
  std::uint64_t bits = 0;
  for (std::uint32_t s = first; s <= last; ++s) bits |= 1ull << (s - 1);
  return ScaleMask(bits);
}

ScaleMask ScaleMask::parse(const std::string& text) {
  std::uint64_t bits = 0;
  std::stringstream ss(text);
  std::string part;
  try {
    while (std::getline(ss, part, ',')) {
      const auto dash = part.find_first_of("-~");
      const std::uint32_t first = static_cast<std::uint32_t>(std::stoul(part.substr(0, dash)));
      const std::uint32_t last = dash == std::string::npos
                                     ? first
                                     : static_cast<std::uint32_t>(std::stoul(part.substr(dash + 1)));
      bits |= range(first, last).bits_;
    }
  } catch (const std::logic_error&) {
    throw ConfigError("bad scale selection '" + text + "'");
  }
  if (bits == 0) throw ConfigError("empty scale selection '" + text + "'");
  return ScaleMask(bits);
}

std::vector<std::uint32_t> ScaleMask::scales(std::uint32_t num_scales) const {
  std::vector<std::uint32_t> out;
  for (std::uint32_t s = 1; s <= std::min<std::uint32_t>(num_scales, 64); ++s) {
    if (contains(s)) out.push_back(s);
  }
  return out;
}

bool in_region(const PatchGeometry& g, SpatialRegion region) {
  constexpr float kThird = 1.0f / 3.0f;
  constexpr float kTwoThirds = 2.0f / 3.0f;
  switch (region) {
    case SpatialRegion::kWhole: return true;
    case SpatialRegion::kTop: return g.center_y < kThird;
    case SpatialRegion::kMiddle: return g.center_y >= kThird && g.center_y < kTwoThirds;
    case SpatialRegion::kBottom: return g.center_y >= kTwoThirds;
  }
  return false;
}

PooledRepresentation pool_mpp(const GmmModel& model, const DescriptorSet& set,
                              const ScaleMask& mask) {
  const auto groups = group_by_scale(set, mask);
  require_nonempty(groups);
  PooledRepresentation rep = start(PoolStrategy::kMpp, model, groups);
  rep.payload = mpp_payload(model, set, groups, &rep.zero);
  rep.power_normalized = rep.l2_normalized = true;
  return rep;
}

PooledRepresentation pool_nfk(const GmmModel& model, const DescriptorSet& set,
                              const ScaleMask& mask) {
  const auto groups = group_by_scale(set, mask);
  std::vector<std::size_t> rows;
  for (const auto& g : groups) rows.insert(rows.end(), g.rows.begin(), g.rows.end());
  if (rows.empty()) throw InputError("NFK pooling of an empty descriptor set");
  std::sort(rows.begin(), rows.end());
  PooledRepresentation rep = start(PoolStrategy::kNfk, model, groups);
  const FisherVector fv = improved_fisher(encode_fv(model, set, rows));
  rep.payload = fv.values;
  rep.zero = fv.zero;
  rep.power_normalized = rep.l2_normalized = true;
  return rep;
}

PooledRepresentation pool_csf(const GmmModel& model, const DescriptorSet& set,
                              const ScaleMask& mask) {
  const auto groups = group_by_scale(set, mask);
  require_nonempty(groups);
  PooledRepresentation rep = start(PoolStrategy::kCsf, model, groups);
  for (const FisherVector& fv : per_scale_fvs(model, set, groups)) {
    const FisherVector ifk = improved_fisher(fv);
    rep.payload.insert(rep.payload.end(), ifk.values.begin(), ifk.values.end());
  }
  rep.zero = l2_normalize(std::span<double>(rep.payload)) == 0.0;
  rep.power_normalized = rep.l2_normalized = true;
  return rep;
}

PooledRepresentation pool_ap(const DescriptorSet& vectors) {
  if (vectors.empty()) throw InputError("average pooling of zero vectors");
  PooledRepresentation rep;
  rep.strategy = PoolStrategy::kAp;
  rep.dim = vectors.dim();
  rep.payload.assign(vectors.dim(), 0.0);
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    const auto r = vectors.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) rep.payload[j] += r[j];
  }
  const double inv_n = 1.0 / static_cast<double>(vectors.size());
  for (double& v : rep.payload) v *= inv_n;
  rep.zero = l2_normalize(std::span<double>(rep.payload)) == 0.0;
  rep.l2_normalized = true;
  for (std::uint32_t s = 1; s <= vectors.num_scales(); ++s) {
    if (vectors.scale_count(s) == 0) continue;
    rep.scales.push_back(s);
    rep.scale_counts.push_back(vectors.scale_count(s));
  }
  return rep;
}

PooledRepresentation pool_mpp_sp(const GmmModel& model, const DescriptorSet& set,
                                 const ScaleMask& mask) {
  const auto whole = group_by_scale(set, mask);
  PooledRepresentation rep = start(PoolStrategy::kMppSp, model, whole);
  for (SpatialRegion region : {SpatialRegion::kWhole, SpatialRegion::kTop,
                               SpatialRegion::kMiddle, SpatialRegion::kBottom}) {
    bool zero = false;
    const auto block = mpp_payload(model, set, group_by_scale(set, mask, region), &zero);
    rep.payload.insert(rep.payload.end(), block.begin(), block.end());
    rep.zero_blocks.push_back(zero);
  }
  rep.zero = l2_normalize(std::span<double>(rep.payload)) == 0.0;
  rep.power_normalized = rep.l2_normalized = true;
  return rep;
}

PooledRepresentation pool(PoolStrategy strategy, const GmmModel& model,
                          const DescriptorSet& set, const ScaleMask& mask) {
  switch (strategy) {
    case PoolStrategy::kMpp: return pool_mpp(model, set, mask);
    case PoolStrategy::kNfk: return pool_nfk(model, set, mask);
    case PoolStrategy::kCsf: return pool_csf(model, set, mask);
    case PoolStrategy::kMppSp: return pool_mpp_sp(model, set, mask);
    case PoolStrategy::kAp:
    case PoolStrategy::kRawFisher:
      break;
  }
  throw ConfigError(std::string("pool() does not handle strategy '") +
                    pool_strategy_name(strategy) + "'");
}

std::size_t pooled_length(PoolStrategy strategy, std::size_t K, std::size_t d,
                          std::size_t num_scales) {
  const std::size_t fv = 2 * K * d;
  switch (strategy) {
    case PoolStrategy::kRawFisher:
    case PoolStrategy::kMpp:
    case PoolStrategy::kNfk: return fv;
    case PoolStrategy::kCsf: return num_scales * fv;
    case PoolStrategy::kMppSp: return 4 * fv;
    case PoolStrategy::kAp: return d;
  }
  return 0;
}

PooledRepresentation as_representation(const FisherVector& fv) {
  PooledRepresentation rep;
  rep.strategy = PoolStrategy::kRawFisher;
  rep.num_components = fv.num_components;
  rep.dim = fv.dim;
  rep.payload = fv.values;
  rep.zero = fv.zero;
  rep.power_normalized = fv.power_normalized;
  rep.l2_normalized = fv.l2_normalized;
  return rep;
}

namespace {

void write_record(BinaryWriter& w, const PooledRepresentation& rep) {
  w.magic("MPPF");
  w.u32(kRepresentationVersion);
  w.u32(static_cast<std::uint32_t>(rep.num_components));
  w.u32(static_cast<std::uint32_t>(rep.dim));
  std::uint8_t flags = static_cast<std::uint8_t>(static_cast<std::uint8_t>(rep.strategy) << 4);
  if (rep.power_normalized) flags |= 0x1;
  if (rep.l2_normalized) flags |= 0x2;
  if (rep.zero) flags |= 0x4;
  w.u8(flags);
  w.u32(static_cast<std::uint32_t>(rep.scales.size()));
  for (std::size_t i = 0; i < rep.scales.size(); ++i) {
    w.u32(rep.scales[i]);
    w.u64(rep.scale_counts[i]);
  }
  w.u32(static_cast<std::uint32_t>(rep.zero_blocks.size()));
  for (bool z : rep.zero_blocks) w.u8(z ? 1 : 0);
  w.u64(rep.payload.size());
  w.f32_array(std::span<const double>(rep.payload));
}

PooledRepresentation read_record(BinaryReader& r) {
  r.expect_magic("MPPF");
  const std::uint32_t version = r.u32();
  if (version != kRepresentationVersion) {
    throw FormatError(r.path() + ": unsupported MPPF version " + std::to_string(version));
  }
  PooledRepresentation rep;
  rep.num_components = r.u32();
  rep.dim = r.u32();
  const std::uint8_t flags = r.u8();
  const std::uint8_t tag = flags >> 4;
  if (tag > static_cast<std::uint8_t>(PoolStrategy::kMppSp)) {
    throw FormatError(r.path() + ": unknown strategy tag " + std::to_string(tag));
  }
  rep.strategy = static_cast<PoolStrategy>(tag);
  rep.power_normalized = (flags & 0x1) != 0;
  rep.l2_normalized = (flags & 0x2) != 0;
  rep.zero = (flags & 0x4) != 0;
  const std::uint32_t num_scales = r.u32();
  if (num_scales > 64) throw FormatError(r.path() + ": bad scale count");
  for (std::uint32_t i = 0; i < num_scales; ++i) {
    rep.scales.push_back(r.u32());
    rep.scale_counts.push_back(r.u64());
  }
  const std::uint32_t blocks = r.u32();
  if (blocks > 64) throw FormatError(r.path() + ": bad block count");
  for (std::uint32_t i = 0; i < blocks; ++i) rep.zero_blocks.push_back(r.u8() != 0);
  const std::uint64_t length = r.u64();
  if (length > (1ull << 31)) throw FormatError(r.path() + ": payload too large");
  rep.payload = r.f32_array_as_f64(length);
  return rep;
}

}  // namespace

void save_representation(const PooledRepresentation& rep, const std::string& path) {
  save_representations({rep}, path);
}

void save_representations(const std::vector<PooledRepresentation>& reps,
                          const std::string& path) {
  BinaryWriter w(path);
  for (const auto& rep : reps) write_record(w, rep);
  w.close();
}

std::vector<PooledRepresentation> load_representations(const std::string& path) {
  BinaryReader r(path);
  std::vector<PooledRepresentation> reps;
  while (!r.at_end()) reps.push_back(read_record(r));
  if (reps.empty()) throw FormatError(path + ": no MPPF records");
  return reps;
}

PooledRepresentation load_representation(const std::string& path) {
  auto reps = load_representations(path);
  if (reps.size() != 1) {
    throw FormatError(path + ": expected one MPPF record, found " + std::to_string(reps.size()));
  }
  return std::move(reps.front());
}

}  // namespace mpp
