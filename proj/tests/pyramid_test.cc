#include "mpp/pyramid.h"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mpp/errors.h"
#include "mpp/random.h"

namespace mpp {
namespace {

TEST(Pyramid, EdgeDoublingEdges) {
  const ScalePyramid p{7, 227, ScaleStep::kEdgeDoubling};
  const std::vector<std::uint32_t> want = {227, 454, 908, 1816, 3632, 7264, 14528};
  EXPECT_EQ(p.edges(), want);
  EXPECT_THROW(p.edge(0), InputError);
  EXPECT_THROW(p.edge(8), InputError);
}

TEST(Pyramid, AreaDoublingEdges) {
  const ScalePyramid p{7, 227, ScaleStep::kAreaDoubling};
  const std::vector<std::uint32_t> want = {227, 322, 454, 643, 908, 1285, 1816};
  EXPECT_EQ(p.edges(), want);
}

// Activation counts of the seven-level reference pyramid: 270, 754, 1,910 and
// 4,410 local activations for 4 to 7 levels, largest level 1,816 pixels.
TEST(Pyramid, ReferenceActivationCounts) {
  const NetworkSpec net = reference_alex_layout();
  const ScalePyramid p{7, 227, ScaleStep::kAreaDoubling};
  const auto counts = expected_scale_counts(net, p);
  const std::vector<std::size_t> per_level = {1, 9, 64, 196, 484, 1156, 2500};
  EXPECT_EQ(counts, per_level);
  std::vector<std::size_t> cumulative(counts.size());
  std::partial_sum(counts.begin(), counts.end(), cumulative.begin());
  EXPECT_EQ(cumulative[3], 270u);
  EXPECT_EQ(cumulative[4], 754u);
  EXPECT_EQ(cumulative[5], 1910u);
  EXPECT_EQ(cumulative[6], 4410u);
  EXPECT_EQ(p.edge(7), 1816u);
}

TEST(Pyramid, ToyCountsWithEdgeDoubling) {
  const NetworkSpec net = make_toy_network(1);
  const auto counts = expected_scale_counts(net, ScalePyramid{5, 32, ScaleStep::kEdgeDoubling});
  const std::vector<std::size_t> want = {1, 25, 169, 841, 3721};
  EXPECT_EQ(counts, want);
}

TEST(Pyramid, ResizePreservesConstants) {
  const Tensor flat(2, 37, 53, 0.3125f);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{37, 53}, {74, 106}, {19, 20}, {5, 211}}) {
    const Tensor r = resize_bilinear(flat, h, w);
    ASSERT_EQ(r.shape(), (Shape{2, h, w}));
    for (float v : r.data()) ASSERT_FLOAT_EQ(v, 0.3125f);
  }
}

TEST(Pyramid, ResizeSameSizeIsIdentity) {
  Rng rng(3);
  Tensor t(1, 16, 16);
  for (float& v : t.data()) v = static_cast<float>(rng.uniform());
  const Tensor r = resize_bilinear(t, 16, 16);
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_FLOAT_EQ(r.data()[i], t.data()[i]);
}

TEST(Pyramid, UpscaleInterpolatesLinearRamp) {
  // Half-pixel centers: target x maps to source (x + 0.5) / 2 - 0.5.
  Tensor t(1, 1, 4);
  for (std::size_t x = 0; x < 4; ++x) t.at(0, 0, x) = static_cast<float>(x);
  const Tensor r = resize_bilinear(t, 1, 8);
  const float want[8] = {0.0f, 0.25f, 0.75f, 1.25f, 1.75f, 2.25f, 2.75f, 3.0f};
  for (std::size_t x = 0; x < 8; ++x) EXPECT_FLOAT_EQ(r.at(0, 0, x), want[x]) << x;
}

TEST(Pyramid, DownscaleRemovesFineGrating) {
  // A one-pixel checkerboard averages out when shrunk by 4.
  Tensor t(1, 64, 64);
  for (std::size_t y = 0; y < 64; ++y)
    for (std::size_t x = 0; x < 64; ++x) t.at(0, y, x) = ((x + y) % 2) ? 1.0f : 0.0f;
  const Tensor r = resize_bilinear(t, 16, 16);
  for (float v : r.data()) EXPECT_NEAR(v, 0.5f, 0.02f);
}

TEST(Pyramid, FlipHorizontal) {
  Tensor t(1, 2, 3);
  for (std::size_t x = 0; x < 3; ++x) t.at(0, 1, x) = static_cast<float>(x);
  const Tensor f = flip_horizontal(t);
  EXPECT_EQ(f.at(0, 1, 0), 2.0f);
  EXPECT_EQ(f.at(0, 1, 2), 0.0f);
}

TEST(Pyramid, BuildPyramidShapes) {
  const Tensor image(1, 40, 60, 0.5f);
  const auto levels = build_pyramid(image, 3, 32);
  ASSERT_EQ(levels.size(), 3u);
  EXPECT_EQ(levels[0].shape(), (Shape{1, 32, 32}));
  EXPECT_EQ(levels[2].shape(), (Shape{1, 128, 128}));
}

TEST(Pyramid, ExtractAllMergesScalesInOrder) {
  const NetworkSpec net = make_toy_network(5);
  Rng rng(8);
  Tensor image(1, 50, 50);
  for (float& v : image.data()) v = static_cast<float>(rng.uniform());
  const DescriptorSet dense = extract_all(net, image, 3);
  EXPECT_EQ(dense.size(), 1u + 25u + 169u);
  EXPECT_EQ(dense.scale_counts(), (std::vector<std::size_t>{1, 25, 169}));
  for (std::size_t i = 1; i < dense.size(); ++i) {
    EXPECT_LE(dense.geometry(i - 1).scale, dense.geometry(i).scale);
  }

  ExtractionOptions naive;
  naive.naive = true;
  const DescriptorSet slow = extract_all(net, image, 3, naive);
  ASSERT_EQ(slow.size(), dense.size());
  for (std::size_t i = 0; i < dense.size(); ++i) {
    for (std::size_t j = 0; j < dense.dim(); ++j) {
      ASSERT_NEAR(dense.row(i)[j], slow.row(i)[j], 1e-5 * (1.0 + std::abs(slow.row(i)[j])));
    }
  }
}

TEST(Pyramid, SingleScale) {
  const NetworkSpec net = make_toy_network(5);
  const DescriptorSet one = extract_all(net, Tensor(1, 32, 32, 0.2f), 1);
  EXPECT_EQ(one.size(), 1u);
  EXPECT_EQ(one.num_scales(), 1u);
  EXPECT_THROW(extract_all(net, Tensor(1, 32, 32), 0), InputError);
}

TEST(Pyramid, ParseScaleStep) {
  EXPECT_EQ(parse_scale_step("2"), ScaleStep::kEdgeDoubling);
  EXPECT_EQ(parse_scale_step("sqrt2"), ScaleStep::kAreaDoubling);
  EXPECT_THROW(parse_scale_step("3"), ConfigError);
}

}  // namespace
}  // namespace mpp
