#ifndef MPP_TESTS_TEST_SUPPORT_H_
#define MPP_TESTS_TEST_SUPPORT_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mpp/descriptor_set.h"
#include "mpp/gmm.h"

namespace mpp::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

// Random diagonal GMM with weights bounded away from zero.
GmmModel random_gmm(std::size_t k, std::size_t d, std::uint64_t seed);

// counts[s] descriptors at scale s+1, Gaussian values, geometry spread over the
// unit square.
DescriptorSet random_set(std::size_t d, const std::vector<std::size_t>& counts,
                         std::uint64_t seed, double spread = 1.5);

std::vector<std::vector<double>> rows_of(const DescriptorSet& set);
std::vector<std::vector<double>> rows_of(const DescriptorSet& set,
                                         std::span<const std::size_t> rows);

// Straightforward Fisher vector: densities evaluated directly (no log-sum-exp
// or cached constants), mean block then sigma block.
std::vector<double> oracle_fv(const GmmModel& model, const std::vector<std::vector<double>>& x);

// Same gradient from central finite differences of the mean log-likelihood.
std::vector<double> finite_difference_fv(const GmmModel& model,
                                         const std::vector<std::vector<double>>& x,
                                         double step = 1e-6);

std::vector<double> power_sqrt(std::vector<double> v);
std::vector<double> unit(std::vector<double> v);
double norm(std::span<const double> v);
double max_abs_diff(std::span<const double> a, std::span<const double> b);
double relative_error(std::span<const double> a, std::span<const double> b);

// 11-point AP by enumerating every cutoff for every recall level.
double brute_force_ap(const std::vector<double>& scores, const std::vector<bool>& relevant);

std::string read_file(const std::string& path);

}  // namespace mpp::testing

#endif  // MPP_TESTS_TEST_SUPPORT_H_
