#ifndef MPP_GMM_H_
#define MPP_GMM_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mpp/descriptor_set.h"

namespace mpp {

// Diagonal-covariance Gaussian mixture (the visual vocabulary).
struct GmmModel {
  std::size_t num_components = 0;
  std::size_t dim = 0;
  std::vector<double> weights;  // K, sum to 1
  std::vector<double> means;    // K x d
  std::vector<double> sigmas;   // K x d, standard deviations

  std::span<const double> mean(std::size_t k) const {
    return std::span<const double>(means).subspan(k * dim, dim);
  }
  std::span<const double> sigma(std::size_t k) const {
    return std::span<const double>(sigmas).subspan(k * dim, dim);
  }

  // Throws InputError unless shapes agree, weights are positive and sum to 1
  // (1e-9), and every sigma is positive and finite.
  void check() const;
};

struct GmmOptions {
  std::uint64_t seed = 1;
  std::size_t kmeans_iterations = 10;
  std::size_t max_iterations = 200;
  double relative_tolerance = 1e-5;
  double weight_floor = 1e-6;
  // Variance floor as a fraction of the mean per-dimension data variance.
  double variance_floor_ratio = 1e-8;
  // fit_gmm requires at least this many samples per component.
  std::size_t min_samples_per_component = 10;
};

struct GmmFitReport {
  std::vector<double> log_likelihood;  // mean per-sample LL after each E-step
  std::size_t iterations = 0;
  std::size_t reseeded_components = 0;
  bool converged = false;
};

GmmModel fit_gmm(const DescriptorSet& samples, std::size_t num_components,
                 const GmmOptions& options = {}, GmmFitReport* report = nullptr);

// Caches per-component constants so posteriors can be evaluated repeatedly.
// Holds a reference to the model, which must outlive it.
class GmmEvaluator {
 public:
  explicit GmmEvaluator(const GmmModel& model);

  // Writes gamma_k(x) into `gamma` (size K); returns log p(x).
  double posteriors(const double* x, double* gamma) const;

  const GmmModel& model() const { return *model_; }
  std::span<const double> inv_sigma() const { return inv_sigma_; }

 private:
  const GmmModel* model_;
  std::vector<double> log_norm_;   // log w_k - sum_j log sigma_kj - d/2 log 2pi
  std::vector<double> inv_sigma_;  // K x d
};

// Mean log-likelihood of the rows of `samples` under the model.
double mean_log_likelihood(const GmmModel& model, const DescriptorSet& samples);

// Soft assignments gamma_k(x) written into `out` (size K); they are
// proportional to w_k N(x; mu_k, sigma_k^2) and sum to 1. Returns log p(x).
double posteriors(const GmmModel& model, std::span<const double> x,
                  std::span<double> out);
std::vector<double> posteriors(const GmmModel& model, std::span<const float> x);

// Runs one E+M step in place (no floors beyond those in options).
// Exposed for fixed-point checks.
void em_step(GmmModel& model, const DescriptorSet& samples, const GmmOptions& options);

// "MPPG" container; parameters kept in double precision.
void save_gmm(const GmmModel& model, const std::string& path);
GmmModel load_gmm(const std::string& path);

}  // namespace mpp

#endif  // MPP_GMM_H_
