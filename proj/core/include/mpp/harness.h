#ifndef MPP_HARNESS_H_
#define MPP_HARNESS_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mpp/pooling.h"
#include "mpp/pyramid.h"
#include "mpp/tensor.h"

namespace mpp {

// Everything a pipeline run depends on. Read from a flat "key = value" file
// (see apply_setting for the keys), then overridden from the command line.
struct PipelineConfig {
  std::uint64_t seed = 1;
  int threads = 1;

  // "synthetic:scale-noise", "synthetic:planted-square" or a manifest path.
  std::string dataset = "synthetic:scale-noise";
  std::size_t num_classes = 3;  // synthetic datasets only
  std::size_t train_per_class = 20;
  std::size_t test_per_class = 20;
  std::size_t image_size = 0;   // synthetic source edge; 0 = generator default
  std::string synthetic_options;  // generator overrides, "key=value,..."

  // "toy" or a network file (MPPN or text manifest).
  std::string net = "toy";
  std::uint64_t net_seed = 7;
  std::uint32_t scales = 3;
  ScaleStep scale_step = ScaleStep::kEdgeDoubling;
  std::string scale_range;      // ScaleMask syntax; empty = every scale

  bool descriptor_l2 = false;   // l2-normalize raw activations before PCA
  std::size_t pca_dim = 16;
  std::size_t pca_samples = 25600;
  bool pca_whiten = false;
  std::size_t gmm_k = 8;
  std::size_t gmm_max_iterations = 200;

  PoolStrategy pool = PoolStrategy::kMpp;
  double svm_lambda = 0.0;      // <= 0: cross-validated
  std::size_t svm_epochs = 50;

  // Empty: $MPP_CACHE_DIR, else "./mpp-cache".
  std::string cache_dir;

  // scale_sweep inputs: ranges separated by ';', strategies by ','.
  std::string sweep_ranges = "1-1;1-2;1-3";
  std::string sweep_pools = "mpp,nfk";

  ScaleMask mask() const;
  // 2Kd for Fisher-based strategies (times N for CSF, 4 for MPP+SP).
  std::size_t fv_length() const;
  std::uint32_t num_selected_scales() const;
};

// "paper": 7 area-doubling scales, PCA 128 from 256,000 samples, 256
//          components (65,536-dim MPP vectors).
// "desk":  3 scales, PCA 16, 8 components (256-dim MPP vectors).
PipelineConfig preset_config(const std::string& name);

// Sets one key; throws ConfigError for unknown keys or bad values. The key
// "preset" resets every field to the named preset.
void apply_setting(PipelineConfig& config, const std::string& key, const std::string& value);

// Parses "key = value" lines ('#' comments, blank lines ignored).
std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text);
PipelineConfig parse_config(const std::string& text, PipelineConfig base = {});
PipelineConfig load_config(const std::string& path, PipelineConfig base = {});

// Canonical "key = value" listing of every field (round-trips through
// parse_config).
std::string config_to_text(const PipelineConfig& config);

std::string resolve_cache_dir(const PipelineConfig& config);

struct DatasetRecord {
  // Image path or "synth:<generator>:<class>:<seed>".
  std::string source;
  bool train = true;
  std::vector<std::size_t> labels;
};

struct DatasetManifest {
  std::vector<std::string> classes;
  std::vector<DatasetRecord> records;

  std::vector<std::size_t> split(bool train) const;  // record indices
};

// Text form:
//   classes cat dog bird
//   train images/a.pgm cat
//   test  images/b.ppm dog,bird
// Relative paths are resolved against `base_dir`. Requires nonempty train and
// test splits and labels from the class table.
DatasetManifest parse_dataset_manifest(const std::string& text, const std::string& base_dir = "");
DatasetManifest load_dataset_manifest(const std::string& path);

// Manifest for config.dataset (generated for synthetic datasets).
DatasetManifest dataset_for(const PipelineConfig& config);

// Decodes a record into a 1-channel (or net-channel) image.
Tensor load_record_image(const DatasetRecord& record, const PipelineConfig& config,
                         std::size_t channels);

// 64-bit FNV-1a, used for cache keys.
std::uint64_t fnv1a(const std::string& bytes, std::uint64_t h = 0xcbf29ce484222325ull);

}  // namespace mpp

#endif  // MPP_HARNESS_H_
