#ifndef MPP_PCA_H_
#define MPP_PCA_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mpp/descriptor_set.h"

namespace mpp {

struct PcaModel {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  std::vector<double> mean;        // input_dim
  std::vector<double> projection;  // output_dim x input_dim, row-major, orthonormal rows
  std::vector<double> eigenvalues; // output_dim, descending (explained variance)
  bool whiten = false;             // divide each output by sqrt(eigenvalue)
  // Set when the sample rank fell short of output_dim and trailing rows are an
  // arbitrary orthonormal completion.
  bool rank_deficient = false;

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(projection).subspan(i * input_dim, input_dim);
  }
};

struct PcaOptions {
  bool whiten = false;
};

// Top output_dim principal directions of the covariance of every row in
// `samples`. Each row's largest-magnitude component is made positive.
// Requires samples.size() >= output_dim and output_dim <= dim.
PcaModel fit_pca(const DescriptorSet& samples, std::size_t output_dim,
                 const PcaOptions& options = {});

// Projects one vector: W (x - mean), optionally whitened.
void project_into(const PcaModel& model, std::span<const float> x,
                  std::span<float> out);

// Projects every entry; geometry and scale bookkeeping are carried over.
DescriptorSet project(const PcaModel& model, const DescriptorSet& set);

// Uniform sample without replacement of min(count, set.size()) rows, returned
// in ascending row order.
std::vector<std::size_t> sample_rows(std::size_t total, std::size_t count,
                                     std::uint64_t seed);

// "MPPP" container.
void save_pca(const PcaModel& model, const std::string& path);
PcaModel load_pca(const std::string& path);

}  // namespace mpp

#endif  // MPP_PCA_H_
