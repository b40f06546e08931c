#include "mpp/svm.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "mpp/errors.h"
#include "mpp/parallel.h"
#include "mpp/random.h"
#include "test_support.h"

namespace mpp {
namespace {

PooledRepresentation rep(std::vector<double> payload, PoolStrategy s = PoolStrategy::kMpp) {
  PooledRepresentation r;
  r.strategy = s;
  r.payload = std::move(payload);
  return r;
}

struct Data {
  std::vector<PooledRepresentation> x;
  std::vector<std::size_t> y;
};

// Gaussian clusters around unit directions at angles 2 pi c / classes.
Data clusters(std::size_t classes, std::size_t per_class, double radius, double noise,
              std::uint64_t seed) {
  Rng rng(seed);
  Data d;
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t c = 0; c < classes; ++c) {
      const double a = 2.0 * 3.141592653589793 * c / classes;
      d.x.push_back(rep({radius * std::cos(a) + noise * rng.normal(),
                         radius * std::sin(a) + noise * rng.normal(), 0.1 * rng.normal()}));
      d.y.push_back(c);
    }
  }
  return d;
}

double hinge(const LinearModel& m, std::size_t c, const Data& d) {
  double h = 0.0;
  for (std::size_t i = 0; i < d.x.size(); ++i) {
    const double y = d.y[i] == c ? 1.0 : -1.0;
    h += std::max(0.0, 1.0 - y * score(m, d.x[i])[c]);
  }
  return h / d.x.size();
}

const std::vector<std::string> kTwo = {"neg", "pos"};
const std::vector<std::string> kThree = {"a", "b", "c"};

TEST(Svm, SeparatesBlobsAndHingeVanishesAsLambdaShrinks) {
  const Data d = clusters(2, 100, 2.0, 0.3, 1);
  SvmOptions loose, tight;
  loose.lambda = 1e-1;
  tight.lambda = 1e-5;
  const LinearModel a = train_ovr(d.x, d.y, kTwo, loose);
  const LinearModel b = train_ovr(d.x, d.y, kTwo, tight);
  for (std::size_t i = 0; i < d.x.size(); ++i) EXPECT_EQ(predict(b, d.x[i]), d.y[i]);
  EXPECT_LT(hinge(b, 1, d), 1e-2);
  EXPECT_LT(hinge(b, 1, d), hinge(a, 1, d));
  EXPECT_EQ(b.lambda, 1e-5);
  EXPECT_EQ(b.objective[1].size(), 50u);
}

TEST(Svm, IdenticalInputsWithConflictingLabels) {
  std::vector<PooledRepresentation> x = {rep({1, 0}), rep({1, 0}), rep({0, 1}), rep({0, 1})};
  const std::vector<std::size_t> y = {0, 1, 0, 1};
  SvmOptions o;
  o.lambda = 1e-2;
  const LinearModel m = train_ovr(x, y, kTwo, o);
  for (double w : m.weights) EXPECT_TRUE(std::isfinite(w));
  EXPECT_EQ(score(m, x[0]), score(m, x[1]));
  // Nothing separates the classes, so both scores sit on the decision boundary.
  EXPECT_NEAR(score(m, x[0])[1], 0.0, 0.2);
}

TEST(Svm, RepeatingTheDataLeavesTheModelUnchanged) {
  const Data d = clusters(3, 30, 1.0, 0.6, 2);
  Data tripled;
  for (int r = 0; r < 3; ++r) {
    tripled.x.insert(tripled.x.end(), d.x.begin(), d.x.end());
    tripled.y.insert(tripled.y.end(), d.y.begin(), d.y.end());
  }
  SvmOptions o;
  o.lambda = 1e-3;
  const LinearModel a = train_ovr(d.x, d.y, kThree, o);
  const LinearModel b = train_ovr(tripled.x, tripled.y, kThree, o);
  EXPECT_LT(testing::max_abs_diff(a.weights, b.weights), 1e-6);
  EXPECT_LT(testing::max_abs_diff(a.biases, b.biases), 1e-6);
}

TEST(Svm, ScoresAreAffineInTheInput) {
  const Data d = clusters(3, 20, 1.0, 0.5, 3);
  SvmOptions o;
  o.lambda = 1e-2;
  const LinearModel m = train_ovr(d.x, d.y, kThree, o);
  const std::vector<double> u = {0.3, -1.2, 0.5}, v = {2.0, 0.7, -0.1};
  std::vector<double> mix(3);
  for (std::size_t i = 0; i < 3; ++i) mix[i] = 2.5 * u[i] - 0.5 * v[i];
  const auto su = score(m, u), sv = score(m, v), sm = score(m, mix);
  for (std::size_t c = 0; c < 3; ++c) {
    const double b = m.biases[c];
    EXPECT_NEAR(sm[c] - b, 2.5 * (su[c] - b) - 0.5 * (sv[c] - b), 1e-12);
  }
}

TEST(Svm, ThreeClassClusters) {
  const Data train = clusters(3, 50, 2.0, 0.4, 4);
  const Data test = clusters(3, 50, 2.0, 0.4, 5);
  const LinearModel m = train_ovr(train.x, train.y, kThree);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.x.size(); ++i) correct += predict(m, test.x[i]) == test.y[i];
  EXPECT_GE(correct, 147u);
  // Each weight vector points at its own cluster.
  for (std::size_t c = 0; c < 3; ++c) {
    const double a = 2.0 * 3.141592653589793 * c / 3;
    EXPECT_GT(m.w(c)[0] * std::cos(a) + m.w(c)[1] * std::sin(a), 0.0);
  }
  EXPECT_GT(m.lambda, 0.0);
}

TEST(Svm, PredictIsArgmaxOfScores) {
  const Data d = clusters(3, 20, 1.0, 1.0, 6);
  SvmOptions o;
  o.lambda = 1e-3;
  const LinearModel m = train_ovr(d.x, d.y, kThree, o);
  for (const auto& x : d.x) {
    const auto s = score(m, x);
    EXPECT_EQ(predict(m, x), static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin()));
  }
}

TEST(Svm, TrainingIsIndependentOfThreadCount) {
  const Data d = clusters(3, 40, 1.0, 0.8, 7);
  set_num_threads(1);
  const LinearModel a = train_ovr(d.x, d.y, kThree);
  set_num_threads(4);
  const LinearModel b = train_ovr(d.x, d.y, kThree);
  set_num_threads(1);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.biases, b.biases);
  EXPECT_EQ(a.lambda, b.lambda);
}

TEST(Svm, ObjectiveMovingAverageDoesNotIncrease) {
  const Data d = clusters(3, 60, 1.0, 0.8, 8);
  for (double lambda : {1e-3, 1e-2, 1e-1}) {
    SvmOptions o;
    o.lambda = lambda;
    o.epochs = 40;
    const LinearModel m = train_ovr(d.x, d.y, kThree, o);
    for (std::size_t c = 0; c < 3; ++c) {
      const auto& obj = m.objective[c];
      std::vector<double> avg;
      for (std::size_t e = 4; e < obj.size(); ++e) {
        avg.push_back((obj[e] + obj[e - 1] + obj[e - 2] + obj[e - 3] + obj[e - 4]) / 5.0);
      }
      for (std::size_t i = 1; i < avg.size(); ++i) {
        EXPECT_LE(avg[i], avg[i - 1] * (1.0 + 1e-9)) << "lambda " << lambda << " class " << c << " at " << i;
      }
    }
  }
}

TEST(Svm, FiftyEpochsApproachTheOptimum) {
  const Data d = clusters(3, 60, 1.0, 0.8, 11);
  SvmOptions short_run, long_run;
  short_run.lambda = long_run.lambda = 1e-2;
  long_run.epochs = 1000;
  const LinearModel a = train_ovr(d.x, d.y, kThree, short_run);
  const LinearModel b = train_ovr(d.x, d.y, kThree, long_run);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_LE(b.final_objective(c), a.final_objective(c));
    EXPECT_LT(a.final_objective(c), 1.02 * b.final_objective(c)) << c;
  }
}

TEST(Svm, MultiLabelTargets) {
  // Class 2 is present whenever either of the others is.
  const Data d = clusters(2, 40, 2.0, 0.3, 9);
  LabelSets labels;
  for (std::size_t y : d.y) labels.push_back({y, 2});
  SvmOptions o;
  o.lambda = 1e-3;
  const LinearModel m = train_ovr(d.x, labels, kThree, o);
  for (std::size_t i = 0; i < d.x.size(); ++i) {
    const auto s = score(m, d.x[i]);
    EXPECT_GT(s[d.y[i]], 0.0);
    EXPECT_GT(s[2], 0.0);
  }
  const double picked = select_lambda(d.x, labels, kThree, SvmOptions{});
  EXPECT_NE(std::find(o.lambda_grid.begin(), o.lambda_grid.end(), picked), o.lambda_grid.end());
}

TEST(Svm, SaveLoadRoundTrip) {
  testing::TempDir dir;
  const Data d = clusters(3, 10, 1.0, 0.5, 10);
  SvmOptions o;
  o.lambda = 1e-2;
  const LinearModel m = train_ovr(d.x, d.y, kThree, o);
  save_linear_model(m, dir.file("m.mpps"));
  const LinearModel back = load_linear_model(dir.file("m.mpps"));
  EXPECT_EQ(back.classes, m.classes);
  EXPECT_EQ(back.dim, m.dim);
  EXPECT_EQ(back.lambda, m.lambda);
  EXPECT_EQ(back.strategy, m.strategy);
  for (std::size_t i = 0; i < m.weights.size(); ++i) {
    EXPECT_EQ(back.weights[i], static_cast<double>(static_cast<float>(m.weights[i])));
  }
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(back.final_objective(c), m.final_objective(c));
  std::filesystem::resize_file(dir.file("m.mpps"), 25);
  EXPECT_THROW(load_linear_model(dir.file("m.mpps")), FormatError);
}

TEST(Svm, Errors) {
  const std::vector<PooledRepresentation> x = {rep({1, 0}), rep({0, 1})};
  EXPECT_THROW(train_ovr(x, std::vector<std::size_t>{0, 0}, {"only"}), InputError);
  EXPECT_THROW(train_ovr(x, std::vector<std::size_t>{0, 2}, kTwo), InputError);
  EXPECT_THROW(train_ovr({rep({1, 0}), rep({0, 1, 2})}, std::vector<std::size_t>{0, 1}, kTwo),
               InputError);
  EXPECT_THROW(train_ovr({rep({1, 0}), rep({0, 1}, PoolStrategy::kNfk)},
                         std::vector<std::size_t>{0, 1}, kTwo),
               InputError);
  EXPECT_THROW(train_ovr({rep({1, NAN}), rep({0, 1})}, std::vector<std::size_t>{0, 1}, kTwo),
               InputError);
  EXPECT_THROW(train_ovr({}, std::vector<std::size_t>{}, kTwo), InputError);
  SvmOptions bad;
  bad.lambda = 1e-3;
  const LinearModel m = train_ovr(x, std::vector<std::size_t>{0, 1}, kTwo, bad);
  EXPECT_THROW(score(m, std::vector<double>{1, 2, 3}), InputError);
}

}  // namespace
}  // namespace mpp
