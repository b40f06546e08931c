#include "mpp/harness.h"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "mpp/errors.h"
#include "mpp/image_io.h"
#include "mpp/metrics.h"
#include "mpp/pipeline.h"
#include "mpp/random.h"
#include "mpp/synthetic.h"
#include "test_support.h"

namespace mpp {
namespace {

// Small enough to run end to end in about a second.
PipelineConfig tiny(const std::string& cache) {
  PipelineConfig c;
  c.num_classes = 3;
  c.train_per_class = 6;
  c.test_per_class = 4;
  c.image_size = 64;
  c.scales = 2;
  c.pca_dim = 4;
  c.pca_samples = 400;
  c.gmm_k = 2;
  c.svm_lambda = 1e-3;
  c.svm_epochs = 10;
  c.cache_dir = cache;
  return c;
}

TEST(Metrics, ElevenPointApCases) {
  const std::vector<double> s = {0.9, 0.8, 0.7, 0.6};
  EXPECT_DOUBLE_EQ(average_precision_11pt(s, {true, true, false, false}), 1.0);
  // Relevant items at ranks 2 and 4: precision 1/2 up to recall 0.5, then 1/2.
  EXPECT_DOUBLE_EQ(average_precision_11pt(s, {false, true, false, true}), 0.5);
  // One relevant item at rank 3.
  EXPECT_DOUBLE_EQ(average_precision_11pt(s, {false, false, true, false}), 1.0 / 3.0);
  bool none = false;
  EXPECT_EQ(average_precision_11pt(s, {false, false, false, false}, &none), 0.0);
  EXPECT_TRUE(none);
  // Ties keep input order.
  const std::vector<double> tied = {1.0, 1.0};
  EXPECT_DOUBLE_EQ(average_precision_11pt(tied, {false, true}), 0.5);
  EXPECT_DOUBLE_EQ(average_precision_11pt(tied, {true, false}), 1.0);
  EXPECT_THROW(average_precision_11pt(s, {true}), InputError);
}

TEST(Metrics, ElevenPointApMatchesEnumeration) {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(40);
    std::vector<double> scores(n);
    std::vector<bool> rel(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(rng.uniform_index(8));  // plenty of ties
      rel[i] = rng.uniform() < 0.3;
    }
    EXPECT_EQ(average_precision_11pt(scores, rel), testing::brute_force_ap(scores, rel));
  }
}

TEST(Metrics, TopOneAccuracy) {
  const std::vector<std::size_t> p = {0, 1, 2, 2}, t = {0, 1, 1, 2};
  EXPECT_DOUBLE_EQ(top1_accuracy(p, t), 0.75);
  EXPECT_THROW(top1_accuracy(p, std::vector<std::size_t>{0}), InputError);
}

TEST(Config, ParsesKeyValueText) {
  const PipelineConfig c = parse_config(
      "# comment\n"
      "scales = 5\n"
      "scale_range = 1-3\n"
      "pool = nfk\n"
      "\n"
      "pca_whiten = true\n"
      "svm_lambda = 1e-4\n");
  EXPECT_EQ(c.scales, 5u);
  EXPECT_EQ(c.pool, PoolStrategy::kNfk);
  EXPECT_TRUE(c.pca_whiten);
  EXPECT_EQ(c.svm_lambda, 1e-4);
  EXPECT_EQ(c.num_selected_scales(), 3u);
}

TEST(Config, CanonicalTextRoundTrips) {
  PipelineConfig c = preset_config("paper");
  apply_setting(c, "pool", "csf");
  apply_setting(c, "scale_range", "2-5");
  apply_setting(c, "synthetic_options", "gratings=3");
  const std::string text = config_to_text(c);
  EXPECT_EQ(config_to_text(parse_config(text)), text);
}

TEST(Config, RejectsBadInput) {
  PipelineConfig c;
  EXPECT_THROW(apply_setting(c, "scalez", "3"), ConfigError);
  EXPECT_THROW(apply_setting(c, "scales", "0"), ConfigError);
  EXPECT_THROW(apply_setting(c, "scales", "three"), ConfigError);
  EXPECT_THROW(apply_setting(c, "pool", "max"), ConfigError);
  EXPECT_THROW(apply_setting(c, "preset", "huge"), ConfigError);
  EXPECT_THROW(parse_config("scales 3\n"), ConfigError);
}

TEST(Config, PresetLengths) {
  PipelineConfig paper = preset_config("paper");
  EXPECT_EQ(paper.fv_length(), 65536u);
  EXPECT_EQ(paper.scales, 7u);
  EXPECT_EQ(paper.pca_samples, 256000u);
  paper.pool = PoolStrategy::kCsf;
  EXPECT_EQ(paper.fv_length(), 7u * 65536u);
  paper.pool = PoolStrategy::kMppSp;
  EXPECT_EQ(paper.fv_length(), 4u * 65536u);
  EXPECT_EQ(preset_config("desk").fv_length(), 256u);
}

TEST(Config, CacheDirResolution) {
  PipelineConfig c;
  c.cache_dir = "explicit";
  EXPECT_EQ(resolve_cache_dir(c), "explicit");
  c.cache_dir.clear();
  ::setenv("MPP_CACHE_DIR", "/tmp/from-env", 1);
  EXPECT_EQ(resolve_cache_dir(c), "/tmp/from-env");
  ::unsetenv("MPP_CACHE_DIR");
  EXPECT_EQ(resolve_cache_dir(c), "mpp-cache");
}

TEST(Dataset, ManifestParsing) {
  const DatasetManifest m = parse_dataset_manifest(
      "classes cat dog bird\n"
      "train a.pgm cat\n"
      "train b.pgm dog,bird  # two labels\n"
      "test  c.ppm bird\n",
      "/data");
  ASSERT_EQ(m.records.size(), 3u);
  EXPECT_EQ(m.records[0].source, "/data/a.pgm");
  EXPECT_EQ(m.records[1].labels, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(m.split(false), (std::vector<std::size_t>{2}));
}

TEST(Dataset, ManifestErrors) {
  EXPECT_THROW(parse_dataset_manifest("classes a b\ntrain x.pgm c\ntest y.pgm a\n"), ConfigError);
  EXPECT_THROW(parse_dataset_manifest("classes a b\ntrain x.pgm a\n"), ConfigError);
  EXPECT_THROW(parse_dataset_manifest("train x.pgm a\n"), ConfigError);
  EXPECT_THROW(parse_dataset_manifest("classes a\ntrain x.pgm a\ntest y.pgm a\n"), ConfigError);
  EXPECT_THROW(parse_dataset_manifest("classes a b\nvalid x.pgm a\n"), ConfigError);
}

TEST(Dataset, SyntheticSplitsAreDisjointAndBalanced) {
  PipelineConfig c = tiny("unused");
  const DatasetManifest m = dataset_for(c);
  EXPECT_EQ(m.classes.size(), 3u);
  EXPECT_EQ(m.split(true).size(), 18u);
  EXPECT_EQ(m.split(false).size(), 12u);
  std::set<std::string> sources;
  for (const auto& r : m.records) sources.insert(r.source);
  EXPECT_EQ(sources.size(), m.records.size());
}

TEST(ImageIo, PnmRoundTrip) {
  testing::TempDir dir;
  Tensor gray(1, 5, 7);
  Tensor rgb(3, 4, 3);
  for (std::size_t i = 0; i < gray.size(); ++i) gray.data()[i] = static_cast<float>(i % 256) / 255.0f;
  for (std::size_t i = 0; i < rgb.size(); ++i) rgb.data()[i] = static_cast<float>((7 * i) % 256) / 255.0f;
  write_pnm(gray, dir.file("g.pgm"));
  write_pnm(rgb, dir.file("c.ppm"));
  const Tensor g = read_pnm(dir.file("g.pgm"));
  const Tensor c = read_pnm(dir.file("c.ppm"));
  ASSERT_EQ(g.shape(), gray.shape());
  ASSERT_EQ(c.shape(), rgb.shape());
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_FLOAT_EQ(g.data()[i], gray.data()[i]);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_FLOAT_EQ(c.data()[i], rgb.data()[i]);
  EXPECT_EQ(to_channels(c, 1).channels(), 1u);
  EXPECT_EQ(to_channels(g, 3).channels(), 3u);
}

TEST(ImageIo, AsciiAndSixteenBit) {
  testing::TempDir dir;
  {
    std::ofstream out(dir.file("a.pgm"));
    out << "P2\n# comment\n2 1\n1000\n0 500\n";
  }
  const Tensor a = read_pnm(dir.file("a.pgm"));
  EXPECT_FLOAT_EQ(a.at(0, 0, 1), 0.5f);
  {
    std::ofstream out(dir.file("bad.pgm"));
    out << "P5\n4 4\n255\nab";
  }
  EXPECT_THROW(read_pnm(dir.file("bad.pgm")), FormatError);
}

TEST(Pipeline, MissingArtifactsNameTheStage) {
  testing::TempDir dir;
  const PipelineConfig c = tiny(dir.path().string());
  const auto stage_of = [](auto&& fn) -> std::string {
    try {
      fn();
    } catch (const StageError& e) {
      return e.stage();
    }
    return "";
  };
  EXPECT_EQ(stage_of([&] { run_fit_pca(c); }), "extract");
  EXPECT_EQ(stage_of([&] { run_encode(c); }), "extract");
  run_extract(c);
  EXPECT_EQ(stage_of([&] { run_fit_gmm(c); }), "fit-pca");
  run_fit_pca(c);
  EXPECT_EQ(stage_of([&] { run_encode(c); }), "fit-gmm");
  run_fit_gmm(c);
  EXPECT_EQ(stage_of([&] { run_train_svm(c); }), "encode");
  run_encode(c);
  EXPECT_EQ(stage_of([&] { run_eval(c); }), "train-svm");
  run_train_svm(c);
  const EvalReport staged = run_eval(c);

  testing::TempDir other;
  PipelineConfig d = c;
  d.cache_dir = other.path().string();
  EXPECT_EQ(run_pipeline(d).to_json(), staged.to_json());
}

TEST(Pipeline, ReportContents) {
  testing::TempDir dir;
  const PipelineConfig c = tiny(dir.path().string());
  const EvalReport r = run_pipeline(c);
  EXPECT_EQ(r.classes.size(), 3u);
  EXPECT_EQ(r.per_class_ap.size(), 3u);
  EXPECT_EQ(r.num_train, 18u);
  EXPECT_EQ(r.num_test, 12u);
  EXPECT_EQ(r.representation_length, c.fv_length());
  EXPECT_EQ(r.counters.descriptors_per_image, 1u + 25u);
  EXPECT_LT(r.counters.dense_macs, r.counters.naive_macs);
  EXPECT_TRUE(std::filesystem::exists(artifact_paths(c).report));
  EXPECT_EQ(testing::read_file(artifact_paths(c).report), r.to_json());
  EXPECT_EQ(r.to_json().find(dir.path().string()), std::string::npos);
}

TEST(Pipeline, SingleScaleMppAndNfkAgree) {
  testing::TempDir dir;
  PipelineConfig c = tiny(dir.path().string());
  c.scale_range = "2";
  c.pool = PoolStrategy::kMpp;
  const EvalReport mpp = run_pipeline(c);
  c.pool = PoolStrategy::kNfk;
  const EvalReport nfk = run_pipeline(c);
  EXPECT_EQ(mpp.top1, nfk.top1);
  EXPECT_EQ(mpp.map, nfk.map);
}

TEST(Pipeline, SweepHasOneRowPerPair) {
  testing::TempDir dir;
  PipelineConfig c = tiny(dir.path().string());
  c.sweep_ranges = "2;1-2";
  c.sweep_pools = "mpp,nfk,csf";
  const EvalReport r = scale_sweep(c);
  ASSERT_EQ(r.sweep.size(), 6u);
  EXPECT_EQ(r.sweep[0].range, "2");
  EXPECT_EQ(r.sweep[5].strategy, PoolStrategy::kCsf);
  EXPECT_EQ(r.sweep[5].length, 2u * 16u);
}

TEST(Pipeline, AveragePoolingSkipsTheVocabulary) {
  testing::TempDir dir;
  PipelineConfig c = tiny(dir.path().string());
  c.pool = PoolStrategy::kAp;
  const EvalReport r = run_pipeline(c);
  EXPECT_EQ(r.representation_length, 32u);
  EXPECT_FALSE(std::filesystem::exists(artifact_paths(c).gmm));
}

TEST(Pipeline, ImageManifestDataset) {
  testing::TempDir dir;
  std::ofstream manifest(dir.file("data.txt"));
  manifest << "classes ramp0 ramp1\n";
  for (int i = 0; i < 12; ++i) {
    const std::size_t cls = static_cast<std::size_t>(i % 2);
    ScaleNoiseParams p;
    p.size = 48;
    p.num_classes = 2;
    const std::string name = "img" + std::to_string(i) + ".pgm";
    write_pnm(make_scale_noise_image(cls, derive_seed(5, i), p), dir.file(name));
    manifest << (i < 8 ? "train " : "test ") << name << " ramp" << cls << "\n";
  }
  manifest.close();
  PipelineConfig c = tiny(dir.file("cache"));
  c.dataset = dir.file("data.txt");
  const EvalReport r = run_pipeline(c);
  EXPECT_EQ(r.num_train, 8u);
  EXPECT_EQ(r.num_test, 4u);
  EXPECT_EQ(r.classes, (std::vector<std::string>{"ramp0", "ramp1"}));
}

TEST(Pipeline, InconsistentConfigIsRejected) {
  testing::TempDir dir;
  PipelineConfig c = tiny(dir.path().string());
  c.scale_range = "1-4";
  EXPECT_THROW(run_pipeline(c), ConfigError);
}

TEST(Pipeline, ExtractionCountersFromShapes) {
  const NetworkSpec net = make_toy_network(1);
  const ScalePyramid p{3, 32, ScaleStep::kEdgeDoubling};
  const ExtractionCounters c = extraction_counters(net, p);
  EXPECT_EQ(c.descriptors_per_image, 1u + 25u + 169u);
  EXPECT_EQ(c.naive_macs, 195u * count_macs(net, Shape{1, 32, 32}));
  ForwardStats dense;
  extract_all(net, Tensor(1, 32, 32), 3, {}, &dense);
  EXPECT_EQ(c.dense_macs, dense.macs);
}

TEST(Pipeline, DescriptorL2NormalizesBeforePca) {
  testing::TempDir dir;
  PipelineConfig c = tiny(dir.path().string());
  c.descriptor_l2 = true;
  const PipelineConfig plain = tiny(dir.path().string());
  EXPECT_NE(artifact_paths(c).vocab_dir, artifact_paths(plain).vocab_dir);
  EXPECT_EQ(artifact_paths(c).extract_dir, artifact_paths(plain).extract_dir);
  run_extract(c);
  run_fit_pca(c);
  const DescriptorSet samples = load_descriptors(artifact_paths(c).pca_samples);
  ASSERT_FALSE(samples.empty());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto row = samples.row(i);
    EXPECT_NEAR(testing::norm(std::vector<double>(row.begin(), row.end())), 1.0, 1e-6);
  }
  EXPECT_TRUE(parse_config(config_to_text(c)).descriptor_l2);
}

}  // namespace
}  // namespace mpp
