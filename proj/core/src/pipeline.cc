#include "mpp/pipeline.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mpp/errors.h"
#include "mpp/fisher.h"
#include "mpp/gmm.h"
#include "mpp/metrics.h"
#include "mpp/parallel.h"
#include "mpp/pca.h"
#include "mpp/random.h"
#include "mpp/svm.h"

namespace mpp {
namespace fs = std::filesystem;
namespace {

std::string hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return hex(fnv1a(ss.str()));
}

std::string extract_key(const PipelineConfig& c) {
  std::ostringstream k;
  k << "dataset=" << c.dataset;
  if (c.dataset.rfind("synthetic:", 0) == 0) {
    k << ";classes=" << c.num_classes << ";train=" << c.train_per_class
      << ";test=" << c.test_per_class << ";size=" << c.image_size << ";seed=" << c.seed
      << ";options=" << c.synthetic_options;
  } else {
    k << ";manifest=" << file_digest(c.dataset);
  }
  k << ";net=" << c.net;
  if (c.net == "toy") {
    k << ";net_seed=" << c.net_seed;
  } else {
    k << ";net_digest=" << file_digest(c.net);
  }
  k << ";scales=" << c.scales << ";step=" << scale_step_name(c.scale_step);
  return k.str();
}

std::string vocab_key(const PipelineConfig& c) {
  std::ostringstream k;
  k << "seed=" << c.seed << ";range=" << c.scale_range << ";pca=" << c.pca_dim << ";samples="
    << c.pca_samples << ";whiten=" << c.pca_whiten << ";k=" << c.gmm_k
    << ";iters=" << c.gmm_max_iterations;
  if (c.descriptor_l2) k << ";l2";
  // AP bypasses the vocabulary; keep its models apart.
  if (c.pool == PoolStrategy::kAp) k << ";ap";
  return k.str();
}

std::string model_key(const PipelineConfig& c) {
  char lambda[64];
  std::snprintf(lambda, sizeof(lambda), "%.17g", c.svm_lambda);
  std::ostringstream k;
  k << "pool=" << pool_strategy_name(c.pool) << ";lambda=" << lambda
    << ";epochs=" << c.svm_epochs << ";seed=" << c.seed;
  return k.str();
}

// Writes to a temporary name and renames, so an interrupted run never leaves
// a truncated artifact behind.
template <typename Write>
void write_atomically(const std::string& path, Write&& write) {
  const std::string tmp = path + ".tmp";
  write(tmp);
  fs::rename(tmp, path);
}

void require(const std::string& path, const std::string& stage, const std::string& what) {
  if (!fs::exists(path)) {
    throw StageError(stage, "missing " + what + " (" + path + "); run `mpp " + stage + "` first");
  }
}

void check_config(const PipelineConfig& c) {
  for (std::uint32_t s : c.mask().scales(64)) {
    if (!c.scale_range.empty() && s > c.scales) {
      throw ConfigError("scale_range selects scale " + std::to_string(s) + " but only " +
                        std::to_string(c.scales) + " scales are extracted");
    }
  }
  if (c.num_selected_scales() == 0) throw ConfigError("scale_range selects no scale");
}

void begin(const PipelineConfig& c) {
  check_config(c);
  set_num_threads(c.threads);
}

ScalePyramid pyramid_for(const PipelineConfig& c, const NetworkSpec& net) {
  return ScalePyramid{c.scales, net.standard_size, c.scale_step};
}

std::vector<std::size_t> scale_offsets(const std::vector<std::size_t>& counts) {
  std::vector<std::size_t> offsets(counts.size() + 1, 0);
  for (std::size_t s = 0; s < counts.size(); ++s) offsets[s + 1] = offsets[s] + counts[s];
  return offsets;
}

DescriptorSet load_record_descriptors(const PipelineConfig& config, const ArtifactPaths& paths,
                                      std::size_t record,
                                      const std::vector<std::size_t>& expected) {
  const std::string path = paths.descriptors(record);
  require(path, "extract", "descriptors of record " + std::to_string(record));
  DescriptorSet set = load_descriptors(path);
  if (set.scale_counts() != expected) {
    throw FormatError(path + ": per-scale counts do not match the configured pyramid");
  }
  if (config.descriptor_l2) l2_normalize_rows(set);
  return set;
}

std::vector<std::size_t> rows_in_mask(const DescriptorSet& set, const ScaleMask& mask) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (mask.contains(set.geometry(i).scale)) rows.push_back(i);
  }
  return rows;
}

std::string report_config_text(PipelineConfig c) {
  std::istringstream in(config_to_text(c));
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("threads", 0) == 0 || line.rfind("cache_dir", 0) == 0) continue;
    out << line << '\n';
  }
  return out.str();
}

}  // namespace

std::string ArtifactPaths::descriptors(std::size_t record) const {
  char name[32];
  std::snprintf(name, sizeof(name), "r%06zu.mppd", record);
  return (fs::path(extract_dir) / name).string();
}

ArtifactPaths artifact_paths(const PipelineConfig& config) {
  ArtifactPaths p;
  const fs::path root = resolve_cache_dir(config);
  const fs::path x = root / ("x-" + hex(fnv1a(extract_key(config))));
  const fs::path v = x / ("v-" + hex(fnv1a(vocab_key(config))));
  const fs::path m = v / ("m-" + hex(fnv1a(model_key(config))));
  p.extract_dir = x.string();
  p.vocab_dir = v.string();
  p.model_dir = m.string();
  p.pca = (v / "pca.mppp").string();
  p.pca_samples = (v / "pca_samples.mppd").string();
  p.gmm = (v / "gmm.mppg").string();
  p.train_reps = (m / "train.mppf").string();
  p.test_reps = (m / "test.mppf").string();
  p.svm = (m / "svm.mpps").string();
  p.report = (m / "report.json").string();
  return p;
}

NetworkSpec network_for(const PipelineConfig& config) {
  NetworkSpec net = config.net == "toy" ? make_toy_network(config.net_seed, 1)
                                        : load_network_any(config.net);
  validate(net);
  return net;
}

ExtractionCounters extraction_counters(const NetworkSpec& net, const ScalePyramid& pyramid) {
  const NetworkSpec converted = convert_fc_to_conv(net);
  const Shape standard{net.input_channels, net.standard_size, net.standard_size};
  const std::uint64_t per_window = count_macs(net, standard);
  ExtractionCounters c;
  c.images = 1;
  for (std::uint32_t s = 1; s <= pyramid.num_scales; ++s) {
    const std::uint32_t e = pyramid.edge(s);
    const Shape map = dense_output_shape(converted, e);
    const std::size_t windows = map.height * map.width;
    c.dense_macs += count_macs(converted, Shape{net.input_channels, e, e});
    c.naive_macs += windows * per_window;
    c.descriptors_per_image += windows;
  }
  return c;
}

std::vector<std::vector<std::size_t>> split_labels(const DatasetManifest& manifest, bool train) {
  std::vector<std::vector<std::size_t>> labels;
  for (std::size_t r : manifest.split(train)) labels.push_back(manifest.records[r].labels);
  return labels;
}

ExtractionCounters run_extract(const PipelineConfig& config) {
  begin(config);
  const DatasetManifest manifest = dataset_for(config);
  const NetworkSpec net = network_for(config);
  const ArtifactPaths paths = artifact_paths(config);
  fs::create_directories(paths.extract_dir);
  const ExtractionOptions options{config.scale_step, false};
  parallel_for(manifest.records.size(), [&](std::size_t r) {
    const std::string path = paths.descriptors(r);
    if (fs::exists(path)) return;
    const Tensor image = load_record_image(manifest.records[r], config, net.input_channels);
    const DescriptorSet set = extract_all(net, image, config.scales, options);
    write_atomically(path, [&](const std::string& tmp) { save_descriptors(set, tmp); });
  });
  ExtractionCounters c = extraction_counters(net, pyramid_for(config, net));
  c.images = manifest.records.size();
  c.dense_macs *= c.images;
  c.naive_macs *= c.images;
  return c;
}

void run_fit_pca(const PipelineConfig& config) {
  begin(config);
  const ArtifactPaths paths = artifact_paths(config);
  if (fs::exists(paths.pca) && fs::exists(paths.pca_samples)) return;
  const DatasetManifest manifest = dataset_for(config);
  const NetworkSpec net = network_for(config);
  const auto counts = expected_scale_counts(convert_fc_to_conv(net), pyramid_for(config, net));
  const auto offsets = scale_offsets(counts);
  const auto train = manifest.split(true);
  const auto scales = config.mask().scales(config.scales);

  // Equal quota per selected scale, drawn uniformly from that scale's
  // descriptors over the training images.
  std::vector<std::vector<std::size_t>> picks(train.size());  // row indices per image
  for (std::size_t si = 0; si < scales.size(); ++si) {
    const std::uint32_t s = scales[si];
    const std::size_t quota = config.pca_samples / scales.size() +
                              (si < config.pca_samples % scales.size() ? 1 : 0);
    const std::size_t per_image = counts[s - 1];
    const auto chosen = sample_rows(train.size() * per_image, quota, derive_seed(config.seed, 0x9CA00 + s));
    for (std::size_t g : chosen) picks[g / per_image].push_back(offsets[s - 1] + g % per_image);
  }
  std::vector<DescriptorSet> parts(train.size());
  parallel_for(train.size(), [&](std::size_t p) {
    if (picks[p].empty()) return;
    std::sort(picks[p].begin(), picks[p].end());
    parts[p] = load_record_descriptors(config, paths, train[p], counts).select(picks[p]);
  });
  DescriptorSet samples;
  for (const DescriptorSet& part : parts) {
    if (part.empty()) continue;
    if (samples.dim() == 0) samples = DescriptorSet(part.dim(), part.num_scales());
    samples.append_all(part);
  }
  if (samples.empty()) throw InputError("no training descriptors to fit PCA on");
  if (config.pca_dim > samples.dim()) {
    throw ConfigError("pca_dim " + std::to_string(config.pca_dim) +
                      " exceeds the descriptor dimension " + std::to_string(samples.dim()));
  }
  const PcaModel pca = fit_pca(samples, config.pca_dim, PcaOptions{config.pca_whiten});
  fs::create_directories(paths.vocab_dir);
  write_atomically(paths.pca_samples, [&](const std::string& tmp) { save_descriptors(samples, tmp); });
  write_atomically(paths.pca, [&](const std::string& tmp) { save_pca(pca, tmp); });
}

void run_fit_gmm(const PipelineConfig& config) {
  begin(config);
  const ArtifactPaths paths = artifact_paths(config);
  if (fs::exists(paths.gmm)) return;
  require(paths.pca, "fit-pca", "PCA model");
  require(paths.pca_samples, "fit-pca", "PCA sample set");
  const PcaModel pca = load_pca(paths.pca);
  const DescriptorSet samples = project(pca, load_descriptors(paths.pca_samples));
  GmmOptions options;
  options.seed = derive_seed(config.seed, 0x6A3);
  options.max_iterations = config.gmm_max_iterations;
  const GmmModel gmm = fit_gmm(samples, config.gmm_k, options);
  write_atomically(paths.gmm, [&](const std::string& tmp) { save_gmm(gmm, tmp); });
}

void run_encode(const PipelineConfig& config) {
  begin(config);
  const ArtifactPaths paths = artifact_paths(config);
  if (fs::exists(paths.train_reps) && fs::exists(paths.test_reps)) return;
  require(paths.descriptors(0), "extract", "descriptors");
  const DatasetManifest manifest = dataset_for(config);
  const NetworkSpec net = network_for(config);
  const ScaleMask mask = config.mask();
  std::vector<PooledRepresentation> reps(manifest.records.size());

  const auto counts = expected_scale_counts(convert_fc_to_conv(net), pyramid_for(config, net));
  if (config.pool == PoolStrategy::kAp) {
    parallel_for(manifest.records.size(), [&](std::size_t r) {
      const DescriptorSet raw = load_record_descriptors(config, paths, r, counts);
      reps[r] = pool_ap(raw.select(rows_in_mask(raw, mask)));
    });
  } else {
    require(paths.pca, "fit-pca", "PCA model");
    require(paths.gmm, "fit-gmm", "GMM vocabulary");
    const PcaModel pca = load_pca(paths.pca);
    const GmmModel gmm = load_gmm(paths.gmm);
    parallel_for(manifest.records.size(), [&](std::size_t r) {
      const DescriptorSet raw = load_record_descriptors(config, paths, r, counts);
      const DescriptorSet reduced = project(pca, raw.select(rows_in_mask(raw, mask)));
      reps[r] = pool(config.pool, gmm, reduced, mask);
    });
  }
  fs::create_directories(paths.model_dir);
  for (bool train : {true, false}) {
    std::vector<PooledRepresentation> split;
    for (std::size_t r : manifest.split(train)) split.push_back(reps[r]);
    write_atomically(train ? paths.train_reps : paths.test_reps,
                     [&](const std::string& tmp) { save_representations(split, tmp); });
  }
}

void run_train_svm(const PipelineConfig& config) {
  begin(config);
  const ArtifactPaths paths = artifact_paths(config);
  if (fs::exists(paths.svm)) return;
  require(paths.train_reps, "encode", "training representations");
  const DatasetManifest manifest = dataset_for(config);
  const auto reps = load_representations(paths.train_reps);
  const auto labels = split_labels(manifest, true);
  if (reps.size() != labels.size()) {
    throw FormatError(paths.train_reps + ": record count does not match the training split");
  }
  SvmOptions options;
  options.lambda = config.svm_lambda;
  options.epochs = config.svm_epochs;
  options.seed = derive_seed(config.seed, 0x5F3);
  const LinearModel model = train_ovr(reps, labels, manifest.classes, options);
  write_atomically(paths.svm, [&](const std::string& tmp) { save_linear_model(model, tmp); });
}

EvalReport run_eval(const PipelineConfig& config) {
  begin(config);
  const ArtifactPaths paths = artifact_paths(config);
  require(paths.svm, "train-svm", "SVM model");
  require(paths.test_reps, "encode", "test representations");
  const DatasetManifest manifest = dataset_for(config);
  const NetworkSpec net = network_for(config);
  const LinearModel model = load_linear_model(paths.svm);
  const auto reps = load_representations(paths.test_reps);
  const auto labels = split_labels(manifest, false);
  if (reps.size() != labels.size()) {
    throw FormatError(paths.test_reps + ": record count does not match the test split");
  }

  EvalReport report;
  report.config = report_config_text(config);
  report.classes = model.classes;
  report.representation_length = model.dim;
  report.num_train = manifest.split(true).size();
  report.num_test = reps.size();
  report.svm_lambda = model.lambda;
  report.counters = extraction_counters(net, pyramid_for(config, net));
  report.counters.images = manifest.records.size();
  report.counters.dense_macs *= report.counters.images;
  report.counters.naive_macs *= report.counters.images;

  std::vector<std::vector<double>> scores(reps.size());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < reps.size(); ++i) {
    scores[i] = score(model, reps[i]);
    const auto best = static_cast<std::size_t>(
        std::max_element(scores[i].begin(), scores[i].end()) - scores[i].begin());
    if (std::find(labels[i].begin(), labels[i].end(), best) != labels[i].end()) ++correct;
  }
  report.top1 = static_cast<double>(correct) / static_cast<double>(reps.size());
  for (std::size_t c = 0; c < model.num_classes(); ++c) {
    std::vector<double> s(reps.size());
    std::vector<bool> relevant(reps.size());
    for (std::size_t i = 0; i < reps.size(); ++i) {
      s[i] = scores[i][c];
      relevant[i] = std::find(labels[i].begin(), labels[i].end(), c) != labels[i].end();
    }
    bool none = false;
    report.per_class_ap.push_back(average_precision_11pt(s, relevant, &none));
    if (none) report.warnings.push_back("class '" + model.classes[c] + "' has no test positives; AP = 0");
  }
  report.map = mean(report.per_class_ap);
  return report;
}

EvalReport run_pipeline(const PipelineConfig& config) {
  run_extract(config);
  if (config.pool != PoolStrategy::kAp) {
    run_fit_pca(config);
    run_fit_gmm(config);
  }
  run_encode(config);
  run_train_svm(config);
  EvalReport report = run_eval(config);
  write_report(report, artifact_paths(config).report);
  return report;
}

EvalReport scale_sweep(const PipelineConfig& config) {
  std::vector<std::string> ranges;
  {
    std::stringstream ss(config.sweep_ranges);
    std::string part;
    while (std::getline(ss, part, ';')) {
      if (part.find_first_not_of(" \t") != std::string::npos) ranges.push_back(part);
    }
  }
  std::vector<PoolStrategy> pools;
  {
    std::stringstream ss(config.sweep_pools);
    std::string part;
    while (std::getline(ss, part, ',')) {
      if (part.find_first_not_of(" \t") != std::string::npos) pools.push_back(parse_pool_strategy(part));
    }
  }
  if (ranges.empty() || pools.empty()) throw ConfigError("sweep needs at least one range and one strategy");

  EvalReport sweep;
  sweep.config = report_config_text(config);
  for (const std::string& range : ranges) {
    for (PoolStrategy strategy : pools) {
      PipelineConfig c = config;
      apply_setting(c, "scale_range", range);
      c.pool = strategy;
      const EvalReport r = run_pipeline(c);
      sweep.sweep.push_back(SweepRow{range, strategy, r.top1, r.map, r.representation_length});
      sweep.classes = r.classes;
      sweep.num_train = r.num_train;
      sweep.num_test = r.num_test;
      sweep.counters = r.counters;
      for (const auto& w : r.warnings) sweep.warnings.push_back(range + "/" + pool_strategy_name(strategy) + ": " + w);
    }
  }
  return sweep;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["config"] = config;
  j["classes"] = classes;
  j["per_class_ap"] = per_class_ap;
  j["map"] = map;
  j["top1"] = top1;
  j["representation_length"] = representation_length;
  j["num_train"] = num_train;
  j["num_test"] = num_test;
  j["svm_lambda"] = svm_lambda;
  j["counters"] = {{"images", counters.images},
                   {"descriptors_per_image", counters.descriptors_per_image},
                   {"dense_macs", counters.dense_macs},
                   {"naive_macs", counters.naive_macs}};
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : sweep) {
    rows.push_back({{"range", r.range},
                    {"strategy", pool_strategy_name(r.strategy)},
                    {"top1", r.top1},
                    {"map", r.map},
                    {"length", r.length}});
  }
  j["sweep"] = rows;
  j["warnings"] = warnings;
  return j.dump(2) + "\n";
}

void write_report(const EvalReport& report, const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_atomically(path, [&](const std::string& tmp) {
    std::ofstream out(tmp, std::ios::binary);
    out << report.to_json();
    if (!out) throw InputError("failed writing " + tmp);
  });
}

}  // namespace mpp
