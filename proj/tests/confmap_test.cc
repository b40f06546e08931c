#include "mpp/confmap.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mpp/errors.h"
#include "mpp/random.h"
#include "test_support.h"

namespace mpp {
namespace {

DescriptorSet patches(const std::vector<PatchGeometry>& geometry, std::size_t dim = 2) {
  DescriptorSet set(dim, 3);
  std::vector<float> v(dim, 0.0f);
  for (std::size_t i = 0; i < geometry.size(); ++i) {
    v[0] = static_cast<float>(i);
    set.append(v, geometry[i]);
  }
  return set;
}

LinearModel linear(std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  LinearModel m;
  m.classes = {"a", "b"};
  m.dim = dim;
  for (std::size_t i = 0; i < 2 * dim; ++i) m.weights.push_back(rng.normal());
  m.biases = {0.25, -0.5};
  return m;
}

TEST(Confmap, SingleComponentPatchVectorHasClosedForm) {
  GmmModel m;
  m.num_components = 1;
  m.dim = 2;
  m.weights = {1.0};
  m.means = {1.0, -1.0};
  m.sigmas = {0.5, 2.0};
  const float x[2] = {2.0f, 3.0f};  // z = (2, 2)
  const auto rep = patch_representation(m, x);
  const double g[4] = {2.0, 2.0, 3.0 / std::sqrt(2.0), 3.0 / std::sqrt(2.0)};
  std::vector<double> want(g, g + 4);
  want = testing::unit(testing::power_sqrt(want));
  EXPECT_LT(testing::max_abs_diff(rep.payload, want), 1e-15);
  EXPECT_EQ(rep.strategy, PoolStrategy::kMpp);
}

TEST(Confmap, PatchVectorIsSingletonMpp) {
  const GmmModel m = testing::random_gmm(3, 4, 2);
  const DescriptorSet set = testing::random_set(4, {6}, 3);
  for (std::size_t i = 0; i < set.size(); ++i) {
    DescriptorSet one(4, 1);
    one.append(set.row(i), PatchGeometry{});
    EXPECT_LT(testing::max_abs_diff(patch_representation(m, set.row(i)).payload, pool_mpp(m, one).payload),
              1e-14);
  }
}

TEST(Confmap, CoveredCellsUseCellCenters) {
  // Patch covering the left half of a 2x4 grid: centers x = 0.125, 0.375.
  const auto left = covered_cells(PatchGeometry{1, 0.25f, 0.5f, 0.5f}, 2, 4);
  EXPECT_EQ(left, (std::vector<std::size_t>{0, 1, 4, 5}));
  // Tiny patch between centers falls back to the cell holding its center.
  const auto tiny = covered_cells(PatchGeometry{1, 0.9f, 0.1f, 0.01f}, 2, 4);
  EXPECT_EQ(tiny, (std::vector<std::size_t>{3}));
  // Closed boundary: an edge through a cell center includes it.
  const auto edge = covered_cells(PatchGeometry{1, 0.25f, 0.25f, 0.25f}, 4, 4);
  EXPECT_EQ(edge, (std::vector<std::size_t>{0, 1, 4, 5}));
}

TEST(Confmap, DisjointPatchesKeepTheirScores) {
  const DescriptorSet set = patches({{1, 0.25f, 0.5f, 0.5f}, {1, 0.75f, 0.5f, 0.5f}});
  const std::vector<double> scores = {1.0, 3.0};
  const ConfidenceMap map = splat_scores(set, scores, 2, 4);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_EQ(map.value(i, j).value_or(NAN), j < 2 ? 1.0 : 3.0);
      EXPECT_EQ(map.count[i * 4 + j], 1u);
    }
  }
  EXPECT_EQ(*map.argmax(), (std::pair<std::size_t, std::size_t>{0, 2}));
}

TEST(Confmap, OverlapsAverage) {
  const DescriptorSet set = patches({{1, 0.5f, 0.5f, 1.0f}, {2, 0.25f, 0.25f, 0.5f}});
  const std::vector<double> scores = {2.0, 4.0};
  const ConfidenceMap map = splat_scores(set, scores, 2, 2);
  EXPECT_EQ(map.value(0, 0).value_or(NAN), 3.0);
  EXPECT_EQ(map.value(1, 1).value_or(NAN), 2.0);
}

TEST(Confmap, IdenticalDescriptorsGiveConstantMap) {
  const GmmModel m = testing::random_gmm(2, 2, 5);
  DescriptorSet set(2, 2);
  const float v[2] = {0.3f, -0.7f};
  for (int i = 0; i < 9; ++i) {
    set.append(v, PatchGeometry{1 + static_cast<std::uint32_t>(i % 2), (i % 3 + 0.5f) / 3.0f,
                                (i / 3 + 0.5f) / 3.0f, 0.4f});
  }
  const ConfidenceMap map = build_map(set, m, linear(8, 1), 1, 6, 6);
  const auto range = map.range();
  ASSERT_TRUE(range);
  EXPECT_EQ(range->first, range->second);
  const auto pixels = render_map(map);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    EXPECT_EQ(pixels[i], map.count[i] ? 255 : 0);
  }
}

TEST(Confmap, BuildMapScoresEachPatch) {
  const GmmModel m = testing::random_gmm(2, 3, 7);
  const DescriptorSet set = testing::random_set(3, {4, 9}, 8);
  const LinearModel svm = linear(12, 3);
  const ConfidenceMap map = build_map(set, m, svm, 0, 5, 7);
  std::vector<double> scores;
  for (std::size_t i = 0; i < set.size(); ++i) {
    scores.push_back(score(svm, patch_representation(m, set.row(i)))[0]);
  }
  const ConfidenceMap want = splat_scores(set, scores, 5, 7);
  EXPECT_EQ(map.sum, want.sum);
  EXPECT_EQ(map.count, want.count);
  EXPECT_EQ(map.label, "a");
  EXPECT_THROW(build_map(set, m, linear(24, 1), 0, 5, 7), InputError);
  EXPECT_THROW(build_map(set, m, svm, 2, 5, 7), InputError);
  EXPECT_THROW(build_map(set, m, svm, 0, 0, 7), InputError);
}

TEST(Confmap, IndependentOfDescriptorOrder) {
  const DescriptorSet set = testing::random_set(2, {10, 30}, 9);
  Rng rng(4);
  std::vector<double> scores(set.size());
  for (double& s : scores) s = rng.normal() * 1e3;
  std::vector<std::size_t> perm(set.size());
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(std::span<std::size_t>(perm));
  const DescriptorSet shuffled = set.select(perm);
  std::vector<double> shuffled_scores;
  for (std::size_t p : perm) shuffled_scores.push_back(scores[p]);
  const ConfidenceMap a = splat_scores(set, scores, 8, 8);
  const ConfidenceMap b = splat_scores(shuffled, shuffled_scores, 8, 8);
  EXPECT_EQ(a.sum, b.sum);
  EXPECT_EQ(a.count, b.count);
}

TEST(Confmap, RenderingIgnoresPositiveAffineScoreChanges) {
  const DescriptorSet set = testing::random_set(2, {10, 30}, 10);
  Rng rng(5);
  std::vector<double> scores(set.size()), scaled(set.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i] = rng.normal();
    scaled[i] = 4.0 * scores[i];
  }
  EXPECT_EQ(render_map(splat_scores(set, scores, 8, 8)), render_map(splat_scores(set, scaled, 8, 8)));
}

TEST(Confmap, GoldenFourByFourExport) {
  ConfidenceMap map;
  map.height = map.width = 4;
  map.count.assign(16, 1);
  map.count[15] = 0;
  for (int i = 0; i < 16; ++i) map.sum.push_back(i < 15 ? 2.0 * i : 0.0);
  for (int i = 0; i < 15; ++i) map.count[i] = 2;  // mean = i
  map.count[15] = 0;
  testing::TempDir dir;
  const std::string path = dir.file("map.pgm");
  export_map(map, path);
  const unsigned char pixels[16] = {0,   18,  36,  55,  73,  91,  109, 128,
                                    146, 164, 182, 200, 219, 237, 255, 0};
  const std::string want = std::string("P5\n4 4\n255\n") +
                           std::string(reinterpret_cast<const char*>(pixels), 16);
  EXPECT_EQ(testing::read_file(path), want);
  EXPECT_EQ(testing::read_file(path + ".nodata.txt"), "3 3\n");
}

TEST(Confmap, TwoLevelMapUsesFullRange) {
  const DescriptorSet set = patches({{1, 0.5f, 0.25f, 0.5f}, {1, 0.5f, 0.75f, 0.5f}});
  const std::vector<double> scores = {-7.0, -2.0};
  const auto pixels = render_map(splat_scores(set, scores, 2, 2));
  EXPECT_EQ(pixels, (std::vector<std::uint8_t>{0, 0, 255, 255}));
}

TEST(Confmap, EmptyMap) {
  ConfidenceMap map;
  map.height = 2;
  map.width = 3;
  map.sum.assign(6, 0.0);
  map.count.assign(6, 0);
  EXPECT_FALSE(map.range());
  EXPECT_FALSE(map.argmax());
  EXPECT_EQ(render_map(map), std::vector<std::uint8_t>(6, 0));
  testing::TempDir dir;
  export_map(map, dir.file("e.pgm"));
  EXPECT_EQ(testing::read_file(dir.file("e.pgm.nodata.txt")), "0 0\n0 1\n0 2\n1 0\n1 1\n1 2\n");
}

}  // namespace
}  // namespace mpp
