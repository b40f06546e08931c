#ifndef MPP_SVM_H_
#define MPP_SVM_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mpp/pooling.h"

namespace mpp {

// One-vs-rest linear classifiers over pooled representations.
struct LinearModel {
  std::vector<std::string> classes;
  std::size_t dim = 0;
  PoolStrategy strategy = PoolStrategy::kMpp;
  double lambda = 0.0;
  std::size_t epochs = 0;
  std::vector<double> weights;  // classes x dim
  std::vector<double> biases;
  // Primal objective after every epoch, per class.
  std::vector<std::vector<double>> objective;

  std::size_t num_classes() const { return classes.size(); }
  std::span<const double> w(std::size_t c) const {
    return std::span<const double>(weights).subspan(c * dim, dim);
  }
  double final_objective(std::size_t c) const {
    return objective.empty() || objective[c].empty() ? 0.0 : objective[c].back();
  }
};

struct SvmOptions {
  // <= 0 selects lambda by k-fold cross-validation over `lambda_grid`.
  double lambda = 0.0;
  std::size_t epochs = 50;
  std::uint64_t seed = 1;
  std::vector<double> lambda_grid = {1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
  std::size_t cv_folds = 3;
};

// Per-sample label sets (indices into `classes`); single-label data has one
// entry per sample.
using LabelSets = std::vector<std::vector<std::size_t>>;

// Minimizes, per class c,
//   lambda/2 |w|^2 + 1/n sum_i max(0, 1 - y_i (w.x_i + b))
// with y_i = +1 iff c is in labels[i]. The bias is not regularized.
// Stochastic subgradient steps of size 1/(lambda t) over a seeded shuffle;
// after every epoch the bias is set to its exact minimizer for the current w.
// The returned w is the mean of the epoch-end iterates (with its own exact
// bias) from the epoch where that mean had the lowest objective; `objective`
// records that best value after each epoch.
// Exact duplicate samples are merged into one weighted sample, so repeating
// the data set leaves the model unchanged.
// Throws InputError for fewer than two classes, empty or ragged inputs, mixed
// strategy tags or out-of-range labels.
LinearModel train_ovr(const std::vector<PooledRepresentation>& x, const LabelSets& labels,
                      const std::vector<std::string>& classes, const SvmOptions& options = {});
LinearModel train_ovr(const std::vector<PooledRepresentation>& x,
                      const std::vector<std::size_t>& labels,
                      const std::vector<std::string>& classes, const SvmOptions& options = {});

// Lambda chosen by cross-validation (mean accuracy for single-label data,
// mAP otherwise). Ties go to the larger lambda.
double select_lambda(const std::vector<PooledRepresentation>& x, const LabelSets& labels,
                     const std::vector<std::string>& classes, const SvmOptions& options);

// w_c . x + b_c for every class.
std::vector<double> score(const LinearModel& model, std::span<const double> x);
std::vector<double> score(const LinearModel& model, const PooledRepresentation& x);

// argmax of the scores (first on ties).
std::size_t predict(const LinearModel& model, const PooledRepresentation& x);

// "MPPS" container; weights stored as f32.
void save_linear_model(const LinearModel& model, const std::string& path);
LinearModel load_linear_model(const std::string& path);

}  // namespace mpp

#endif  // MPP_SVM_H_
