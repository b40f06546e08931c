#include "mpp/pca.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "mpp/binary_io.h"
#include "mpp/errors.h"
#include "mpp/parallel.h"
#include "mpp/random.h"

namespace mpp {
namespace {

constexpr std::uint32_t kPcaVersion = 1;
constexpr double kWhitenEpsilon = 1e-12;

}  // namespace

PcaModel fit_pca(const DescriptorSet& samples, std::size_t output_dim,
                 const PcaOptions& options) {
  const std::size_t d = samples.dim();
  const std::size_t n = samples.size();
  if (output_dim == 0 || output_dim > d) {
    throw InputError("PCA output dim " + std::to_string(output_dim) +
                     " must be in [1, " + std::to_string(d) + "]");
  }
  if (n < output_dim) {
    throw InputError("PCA needs at least " + std::to_string(output_dim) +
                     " samples, got " + std::to_string(n));
  }

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = samples.row(i);
    for (std::size_t j = 0; j < d; ++j) mean[j] += r[j];
  }
  mean /= static_cast<double>(n);

  // Covariance accumulated in blocks of rows to bound memory.
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  constexpr std::size_t kBlock = 4096;
  Eigen::MatrixXd block;
  for (std::size_t start = 0; start < n; start += kBlock) {
    const std::size_t rows = std::min(kBlock, n - start);
    block.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < rows; ++i) {
      const auto r = samples.row(start + i);
      for (std::size_t j = 0; j < d; ++j) block(i, j) = r[j] - mean[j];
    }
    cov.selfadjointView<Eigen::Lower>().rankUpdate(block.transpose());
  }
  cov = cov.selfadjointView<Eigen::Lower>();
  cov /= static_cast<double>(n > 1 ? n - 1 : 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericError("PCA eigendecomposition failed");
  const Eigen::VectorXd& values = solver.eigenvalues();  // ascending
  const Eigen::MatrixXd& vectors = solver.eigenvectors();

  PcaModel model;
  model.input_dim = d;
  model.output_dim = output_dim;
  model.whiten = options.whiten;
  model.mean.assign(mean.data(), mean.data() + d);
  model.projection.resize(output_dim * d);
  model.eigenvalues.resize(output_dim);
  const double top = std::max(values[static_cast<Eigen::Index>(d) - 1], 0.0);
  const double rank_tol = std::max(top, 1e-300) * 1e-10 * static_cast<double>(d);
  for (std::size_t r = 0; r < output_dim; ++r) {
    const Eigen::Index col = static_cast<Eigen::Index>(d - 1 - r);
    Eigen::VectorXd v = vectors.col(col);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
    std::copy(v.data(), v.data() + d, model.projection.begin() + r * d);
    const double lambda = std::max(values[col], 0.0);
    model.eigenvalues[r] = lambda;
    if (lambda <= rank_tol) model.rank_deficient = true;
  }
  return model;
}

void project_into(const PcaModel& model, std::span<const float> x,
                  std::span<float> out) {
  const std::size_t d = model.input_dim;
  for (std::size_t r = 0; r < model.output_dim; ++r) {
    const double* w = model.projection.data() + r * d;
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += w[j] * (x[j] - model.mean[j]);
    if (model.whiten) acc /= std::sqrt(model.eigenvalues[r] + kWhitenEpsilon);
    out[r] = static_cast<float>(acc);
  }
}

DescriptorSet project(const PcaModel& model, const DescriptorSet& set) {
  if (set.dim() != model.input_dim) {
    throw InputError("cannot project " + std::to_string(set.dim()) +
                     "-dim descriptors with a PCA fitted on " +
                     std::to_string(model.input_dim) + " dims");
  }
  const std::size_t n = set.size();
  std::vector<float> projected(n * model.output_dim);
  constexpr std::size_t kChunk = 256;
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t end = std::min(n, (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) {
      project_into(model, set.row(i),
                   std::span<float>(projected).subspan(i * model.output_dim, model.output_dim));
    }
  });
  DescriptorSet out(model.output_dim, set.num_scales());
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.append(std::span<const float>(projected).subspan(i * model.output_dim, model.output_dim),
               set.geometry(i));
  }
  return out;
}

std::vector<std::size_t> sample_rows(std::size_t total, std::size_t count,
                                     std::uint64_t seed) {
  std::vector<std::size_t> rows(total);
  std::iota(rows.begin(), rows.end(), 0);
  if (count >= total) return rows;
  Rng rng(seed);
  // Partial Fisher-Yates: the first `count` slots become the sample.
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(rows[i], rows[i + rng.uniform_index(total - i)]);
  }
  rows.resize(count);
  std::sort(rows.begin(), rows.end());
  return rows;
}

void save_pca(const PcaModel& model, const std::string& path) {
  BinaryWriter w(path);
  w.magic("MPPP");
  w.u32(kPcaVersion);
  w.u32(static_cast<std::uint32_t>(model.input_dim));
  w.u32(static_cast<std::uint32_t>(model.output_dim));
  w.u8(model.whiten ? 1 : 0);
  w.u8(model.rank_deficient ? 1 : 0);
  w.f32_array(std::span<const double>(model.mean));
  w.f32_array(std::span<const double>(model.projection));
  w.f32_array(std::span<const double>(model.eigenvalues));
  w.close();
}

PcaModel load_pca(const std::string& path) {
  BinaryReader r(path);
  r.expect_magic("MPPP");
  const std::uint32_t version = r.u32();
  if (version != kPcaVersion) {
    throw FormatError(path + ": unsupported MPPP version " + std::to_string(version));
  }
  PcaModel model;
  model.input_dim = r.u32();
  model.output_dim = r.u32();
  if (model.input_dim == 0 || model.output_dim == 0 || model.output_dim > model.input_dim ||
      model.input_dim > (1u << 16)) {
    throw FormatError(path + ": bad MPPP dimensions");
  }
  model.whiten = r.u8() != 0;
  model.rank_deficient = r.u8() != 0;
  model.mean = r.f32_array_as_f64(model.input_dim);
  model.projection = r.f32_array_as_f64(model.input_dim * model.output_dim);
  model.eigenvalues = r.f32_array_as_f64(model.output_dim);
  return model;
}

}  // namespace mpp
