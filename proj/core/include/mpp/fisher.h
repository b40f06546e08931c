#ifndef MPP_FISHER_H_
#define MPP_FISHER_H_

#include <span>
#include <vector>

#include "mpp/descriptor_set.h"
#include "mpp/gmm.h"

namespace mpp {

// 2Kd gradient vector: the mean block (K x d) followed by the sigma block
// (K x d). The weight gradient is not part of the encoding.
struct FisherVector {
  std::size_t num_components = 0;
  std::size_t dim = 0;
  std::vector<double> values;
  bool power_normalized = false;
  bool l2_normalized = false;
  // Set by l2_normalize when the input had zero norm.
  bool zero = false;

  std::size_t size() const { return values.size(); }
  std::span<const double> mean_block(std::size_t k) const {
    return std::span<const double>(values).subspan(k * dim, dim);
  }
  std::span<const double> sigma_block(std::size_t k) const {
    return std::span<const double>(values).subspan((num_components + k) * dim, dim);
  }
};

// Average per-descriptor gradient of log p(x) w.r.t. the means and standard
// deviations, scaled by the diagonal Fisher information:
//   G_mu_k    = 1/(n sqrt(w_k))   sum_i gamma_k(x_i) (x_i - mu_k) / sigma_k
//   G_sigma_k = 1/(n sqrt(2 w_k)) sum_i gamma_k(x_i) [((x_i - mu_k)/sigma_k)^2 - 1]
// Accumulates in double over fixed-size chunks combined by a pairwise tree, so
// the result does not depend on the thread count.
// Throws InputError on an empty row list or a dimension mismatch.
FisherVector encode_fv(const GmmModel& model, const DescriptorSet& set,
                       std::span<const std::size_t> rows);
FisherVector encode_fv(const GmmModel& model, const DescriptorSet& set);

// Signed power normalization z -> sign(z) |z|^alpha. Throws InputError when
// the vector is already power-normalized.
FisherVector power_normalize(FisherVector fv, double alpha = 0.5);
void power_normalize(std::span<double> values, double alpha = 0.5);

// v / ||v||_2. A zero vector is returned unchanged with `zero` set.
FisherVector l2_normalize(FisherVector fv);
// In-place form for plain vectors; returns the norm before scaling (0 leaves
// the vector untouched).
double l2_normalize(std::span<double> values);

double l2_norm(std::span<const double> values);

// power_normalize then l2_normalize.
FisherVector improved_fisher(FisherVector fv, double alpha = 0.5);

}  // namespace mpp

#endif  // MPP_FISHER_H_
