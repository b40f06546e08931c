#include "mpp/fisher.h"

#include <cmath>
#include <numeric>

#include "mpp/errors.h"
#include "mpp/parallel.h"
#include "mpp/reduce.h"

namespace mpp {
namespace {

constexpr std::size_t kChunk = 64;

}  // namespace

FisherVector encode_fv(const GmmModel& model, const DescriptorSet& set,
                       std::span<const std::size_t> rows) {
  if (rows.empty()) throw InputError("cannot encode an empty descriptor subset");
  if (set.dim() != model.dim) {
    throw InputError("descriptor dim " + std::to_string(set.dim()) + " != GMM dim " +
                     std::to_string(model.dim));
  }
  const std::size_t K = model.num_components;
  const std::size_t d = model.dim;
  const std::size_t n = rows.size();
  const GmmEvaluator eval(model);
  const auto inv_sigma = eval.inv_sigma();

  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  std::vector<std::vector<double>> partial(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    std::vector<double>& acc = partial[c];
    acc.assign(2 * K * d, 0.0);
    std::vector<double> x(d), gamma(K);
    const std::size_t end = std::min(n, (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) {
      const auto r = set.row(rows[i]);
      std::copy(r.begin(), r.end(), x.begin());
      eval.posteriors(x.data(), gamma.data());
      for (std::size_t k = 0; k < K; ++k) {
        const double g = gamma[k];
        if (g == 0.0) continue;
        const double* mu = model.means.data() + k * d;
        const double* inv = inv_sigma.data() + k * d;
        double* gm = acc.data() + k * d;
        double* gs = acc.data() + (K + k) * d;
        for (std::size_t j = 0; j < d; ++j) {
          const double z = (x[j] - mu[j]) * inv[j];
          gm[j] += g * z;
          gs[j] += g * (z * z - 1.0);
        }
      }
    }
  });
  tree_reduce(partial, [](std::vector<double>& a, const std::vector<double>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  });

  FisherVector fv;
  fv.num_components = K;
  fv.dim = d;
  fv.values = std::move(partial.front());
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t k = 0; k < K; ++k) {
    const double mean_scale = inv_n / std::sqrt(model.weights[k]);
    const double sigma_scale = inv_n / std::sqrt(2.0 * model.weights[k]);
    for (std::size_t j = 0; j < d; ++j) {
      fv.values[k * d + j] *= mean_scale;
      fv.values[(K + k) * d + j] *= sigma_scale;
    }
  }
  return fv;
}

FisherVector encode_fv(const GmmModel& model, const DescriptorSet& set) {
  std::vector<std::size_t> rows(set.size());
  std::iota(rows.begin(), rows.end(), 0);
  return encode_fv(model, set, rows);
}

void power_normalize(std::span<double> values, double alpha) {
  for (double& v : values) {
    const double mag = std::pow(std::abs(v), alpha);
    v = v < 0.0 ? -mag : mag;
  }
}

FisherVector power_normalize(FisherVector fv, double alpha) {
  if (fv.power_normalized) throw InputError("Fisher vector is already power-normalized");
  power_normalize(fv.values, alpha);
  fv.power_normalized = true;
  // Only an l2 step that comes after the power step counts as final.
  fv.l2_normalized = false;
  return fv;
}

double l2_norm(std::span<const double> values) {
  double sum = 0.0;
  for (double v : values) sum += v * v;
  return std::sqrt(sum);
}

double l2_normalize(std::span<double> values) {
  const double norm = l2_norm(values);
  if (norm > 0.0) {
    for (double& v : values) v /= norm;
  }
  return norm;
}

FisherVector l2_normalize(FisherVector fv) {
  fv.zero = l2_normalize(std::span<double>(fv.values)) == 0.0;
  fv.l2_normalized = true;
  return fv;
}

FisherVector improved_fisher(FisherVector fv, double alpha) {
  return l2_normalize(power_normalize(std::move(fv), alpha));
}

}  // namespace mpp
