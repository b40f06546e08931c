#ifndef MPP_PIPELINE_H_
#define MPP_PIPELINE_H_

#include <cstdint>
#include <string>
#include <vector>

#include "mpp/convnet.h"
#include "mpp/harness.h"
#include "mpp/pooling.h"

namespace mpp {

// Cache layout. Each level's directory name is a hash of the settings that
// level depends on, so runs that differ only downstream share upstream work:
//   <cache>/x-<hash>/               descriptors, one MPPD file per record
//   <cache>/x-<hash>/v-<hash>/      pca.mppp, pca_samples.mppd, gmm.mppg
//   <cache>/x-<hash>/v-<hash>/m-<hash>/  train.mppf, test.mppf, svm.mpps, report.json
struct ArtifactPaths {
  std::string extract_dir;
  std::string vocab_dir;
  std::string model_dir;
  std::string pca;
  std::string pca_samples;
  std::string gmm;
  std::string train_reps;
  std::string test_reps;
  std::string svm;
  std::string report;

  std::string descriptors(std::size_t record) const;
};

ArtifactPaths artifact_paths(const PipelineConfig& config);

// "toy" or a network file.
NetworkSpec network_for(const PipelineConfig& config);

struct ExtractionCounters {
  std::uint64_t dense_macs = 0;  // one pass per pyramid level
  std::uint64_t naive_macs = 0;  // one forward per window
  std::size_t images = 0;
  std::size_t descriptors_per_image = 0;
};

// Multiply-accumulate counts for one image, from shape arithmetic (identical
// to what forward() counts on either path).
ExtractionCounters extraction_counters(const NetworkSpec& net, const ScalePyramid& pyramid);

struct SweepRow {
  std::string range;
  PoolStrategy strategy = PoolStrategy::kMpp;
  double top1 = 0.0;
  double map = 0.0;
  std::size_t length = 0;
};

struct EvalReport {
  std::string config;  // canonical text, without threads and cache_dir
  std::vector<std::string> classes;
  std::vector<double> per_class_ap;
  double map = 0.0;
  double top1 = 0.0;
  std::size_t representation_length = 0;
  std::size_t num_train = 0;
  std::size_t num_test = 0;
  double svm_lambda = 0.0;
  ExtractionCounters counters;
  std::vector<SweepRow> sweep;
  std::vector<std::string> warnings;

  // Stable key order and number formatting; no wall-clock data.
  std::string to_json() const;
};

// Individual stages. Each reads its inputs from the cache and throws
// StageError naming the stage to run when they are missing; outputs that
// already exist are kept.
ExtractionCounters run_extract(const PipelineConfig& config);
void run_fit_pca(const PipelineConfig& config);
void run_fit_gmm(const PipelineConfig& config);
void run_encode(const PipelineConfig& config);
void run_train_svm(const PipelineConfig& config);
EvalReport run_eval(const PipelineConfig& config);

// extract -> PCA -> GMM -> encode/pool -> SVM -> evaluate. The report is also
// written to ArtifactPaths::report. AP skips PCA and GMM and averages the raw
// descriptors of the selected scales.
EvalReport run_pipeline(const PipelineConfig& config);

// run_pipeline for every (range, strategy) pair of config.sweep_ranges x
// config.sweep_pools; one row each, ranges outermost.
EvalReport scale_sweep(const PipelineConfig& config);

void write_report(const EvalReport& report, const std::string& path);

// Labels of the records of one split, in record order.
std::vector<std::vector<std::size_t>> split_labels(const DatasetManifest& manifest, bool train);

}  // namespace mpp

#endif  // MPP_PIPELINE_H_
