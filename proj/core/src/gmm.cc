#include "mpp/gmm.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "mpp/binary_io.h"
#include "mpp/errors.h"
#include "mpp/parallel.h"
#include "mpp/random.h"
#include "mpp/reduce.h"

namespace mpp {
namespace {

constexpr std::uint32_t kGmmVersion = 1;
constexpr std::size_t kChunk = 512;
const double kLogTwoPi = std::log(2.0 * std::numbers::pi);

// Sufficient statistics, with first/second moments taken around `center`
// (the current means) to limit cancellation in the variance update.
struct Stats {
  std::vector<double> mass;  // K
  std::vector<double> first;   // K x d
  std::vector<double> second;  // K x d
  double log_likelihood = 0.0;

  Stats(std::size_t K, std::size_t d)
      : mass(K, 0.0), first(K * d, 0.0), second(K * d, 0.0) {}

  void merge(const Stats& o) {
    for (std::size_t i = 0; i < mass.size(); ++i) mass[i] += o.mass[i];
    for (std::size_t i = 0; i < first.size(); ++i) first[i] += o.first[i];
    for (std::size_t i = 0; i < second.size(); ++i) second[i] += o.second[i];
    log_likelihood += o.log_likelihood;
  }
};

Stats e_step(const GmmModel& m, const DescriptorSet& samples) {
  const std::size_t n = samples.size();
  const std::size_t K = m.num_components;
  const std::size_t d = m.dim;
  const GmmEvaluator eval(m);
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  std::vector<Stats> partial(chunks, Stats(K, d));
  parallel_for(chunks, [&](std::size_t c) {
    Stats& s = partial[c];
    std::vector<double> x(d), gamma(K);
    const std::size_t end = std::min(n, (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) {
      const auto row = samples.row(i);
      std::copy(row.begin(), row.end(), x.begin());
      s.log_likelihood += eval.posteriors(x.data(), gamma.data());
      for (std::size_t k = 0; k < K; ++k) {
        const double g = gamma[k];
        if (g == 0.0) continue;
        s.mass[k] += g;
        const double* mu = m.means.data() + k * d;
        double* f = s.first.data() + k * d;
        double* q = s.second.data() + k * d;
        for (std::size_t j = 0; j < d; ++j) {
          const double diff = x[j] - mu[j];
          f[j] += g * diff;
          q[j] += g * diff * diff;
        }
      }
    }
  });
  if (partial.empty()) return Stats(K, d);
  tree_reduce(partial, [](Stats& a, const Stats& b) { a.merge(b); });
  return std::move(partial.front());
}

struct DataMoments {
  std::vector<double> mean;
  std::vector<double> variance;
  double variance_floor = 0.0;
};

DataMoments data_moments(const DescriptorSet& samples, double floor_ratio) {
  const std::size_t d = samples.dim();
  const std::size_t n = samples.size();
  DataMoments dm;
  dm.mean.assign(d, 0.0);
  dm.variance.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = samples.row(i);
    for (std::size_t j = 0; j < d; ++j) dm.mean[j] += r[j];
  }
  for (auto& v : dm.mean) v /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = samples.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = r[j] - dm.mean[j];
      dm.variance[j] += diff * diff;
    }
  }
  for (auto& v : dm.variance) v /= static_cast<double>(n);
  const double mean_var =
      std::accumulate(dm.variance.begin(), dm.variance.end(), 0.0) / static_cast<double>(d);
  dm.variance_floor = std::max(floor_ratio * mean_var, 1e-20);
  return dm;
}

double squared_distance(std::span<const float> x, const double* c, std::size_t d) {
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double diff = x[j] - c[j];
    s += diff * diff;
  }
  return s;
}

// k-means++ seeding followed by Lloyd iterations. Returns K x d centers.
std::vector<double> kmeans(const DescriptorSet& samples, std::size_t K,
                           const GmmOptions& options, std::vector<std::size_t>& assignment) {
  const std::size_t n = samples.size();
  const std::size_t d = samples.dim();
  Rng rng(derive_seed(options.seed, 0x6b6d));
  std::vector<double> centers(K * d);
  auto set_center = [&](std::size_t k, std::size_t row) {
    const auto r = samples.row(row);
    std::copy(r.begin(), r.end(), centers.begin() + k * d);
  };

  set_center(0, rng.uniform_index(n));
  std::vector<double> nearest(n);
  for (std::size_t i = 0; i < n; ++i) nearest[i] = squared_distance(samples.row(i), centers.data(), d);
  for (std::size_t k = 1; k < K; ++k) {
    const double total = std::accumulate(nearest.begin(), nearest.end(), 0.0);
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double run = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        run += nearest[i];
        if (run > target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.uniform_index(n);
    }
    set_center(k, pick);
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(samples.row(i), centers.data() + k * d, d));
    }
  }

  assignment.assign(n, 0);
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  struct Sums {
    std::vector<double> sum;
    std::vector<double> count;
  };
  for (std::size_t iter = 0; iter < options.kmeans_iterations; ++iter) {
    std::vector<Sums> partial(chunks, Sums{std::vector<double>(K * d, 0.0), std::vector<double>(K, 0.0)});
    parallel_for(chunks, [&](std::size_t c) {
      Sums& s = partial[c];
      const std::size_t end = std::min(n, (c + 1) * kChunk);
      for (std::size_t i = c * kChunk; i < end; ++i) {
        const auto r = samples.row(i);
        std::size_t best = 0;
        double best_dist = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < K; ++k) {
          const double dist = squared_distance(r, centers.data() + k * d, d);
          if (dist < best_dist) {
            best_dist = dist;
            best = k;
          }
        }
        assignment[i] = best;
        s.count[best] += 1.0;
        for (std::size_t j = 0; j < d; ++j) s.sum[best * d + j] += r[j];
      }
    });
    tree_reduce(partial, [](Sums& a, const Sums& b) {
      for (std::size_t i = 0; i < a.sum.size(); ++i) a.sum[i] += b.sum[i];
      for (std::size_t i = 0; i < a.count.size(); ++i) a.count[i] += b.count[i];
    });
    const Sums& total = partial.front();
    for (std::size_t k = 0; k < K; ++k) {
      if (total.count[k] == 0.0) continue;  // keep the previous center
      for (std::size_t j = 0; j < d; ++j) {
        centers[k * d + j] = total.sum[k * d + j] / total.count[k];
      }
    }
  }
  return centers;
}

void normalize_weights(GmmModel& m, double floor) {
  for (auto& w : m.weights) w = std::max(w, floor);
  const double sum = std::accumulate(m.weights.begin(), m.weights.end(), 0.0);
  for (auto& w : m.weights) w /= sum;
}

// Applies the M-step. Returns the components whose posterior mass fell below
// the weight floor; their parameters are left untouched.
std::vector<std::size_t> m_step(GmmModel& m, const Stats& s, std::size_t n,
                                const GmmOptions& options, double variance_floor) {
  const std::size_t d = m.dim;
  std::vector<std::size_t> empty;
  for (std::size_t k = 0; k < m.num_components; ++k) {
    const double mass = s.mass[k];
    if (mass < options.weight_floor * static_cast<double>(n)) {
      empty.push_back(k);
      continue;
    }
    m.weights[k] = mass / static_cast<double>(n);
    for (std::size_t j = 0; j < d; ++j) {
      const double shift = s.first[k * d + j] / mass;
      const double var = s.second[k * d + j] / mass - shift * shift;
      m.means[k * d + j] += shift;
      m.sigmas[k * d + j] = std::sqrt(std::max(var, variance_floor));
    }
  }
  return empty;
}

}  // namespace

GmmEvaluator::GmmEvaluator(const GmmModel& m)
    : model_(&m), log_norm_(m.num_components), inv_sigma_(m.sigmas.size()) {
  for (std::size_t k = 0; k < m.num_components; ++k) {
    double log_det = 0.0;
    for (std::size_t j = 0; j < m.dim; ++j) {
      const double s = m.sigmas[k * m.dim + j];
      log_det += std::log(s);
      inv_sigma_[k * m.dim + j] = 1.0 / s;
    }
    log_norm_[k] = std::log(m.weights[k]) - log_det -
                   0.5 * static_cast<double>(m.dim) * kLogTwoPi;
  }
}

double GmmEvaluator::posteriors(const double* x, double* gamma) const {
  const GmmModel& m = *model_;
  const std::size_t K = m.num_components;
  const std::size_t d = m.dim;
  double max_log = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < K; ++k) {
    const double* mu = m.means.data() + k * d;
    const double* inv = inv_sigma_.data() + k * d;
    double q = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double z = (x[j] - mu[j]) * inv[j];
      q += z * z;
    }
    gamma[k] = log_norm_[k] - 0.5 * q;
    max_log = std::max(max_log, gamma[k]);
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    gamma[k] = std::exp(gamma[k] - max_log);
    sum += gamma[k];
  }
  for (std::size_t k = 0; k < K; ++k) gamma[k] /= sum;
  return max_log + std::log(sum);
}

void GmmModel::check() const {
  if (num_components == 0 || dim == 0) throw InputError("GMM has no components");
  if (weights.size() != num_components || means.size() != num_components * dim ||
      sigmas.size() != num_components * dim) {
    throw InputError("GMM parameter arrays have inconsistent sizes");
  }
  double sum = 0.0;
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw InputError("GMM weight must be positive");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InputError("GMM weights do not sum to 1");
  for (double s : sigmas) {
    if (!(s > 0.0) || !std::isfinite(s)) throw InputError("GMM sigma must be positive");
  }
  for (double mu : means) {
    if (!std::isfinite(mu)) throw InputError("GMM mean must be finite");
  }
}

double posteriors(const GmmModel& model, std::span<const double> x, std::span<double> out) {
  if (x.size() != model.dim || out.size() != model.num_components) {
    throw InputError("posteriors: dimension mismatch");
  }
  return GmmEvaluator(model).posteriors(x.data(), out.data());
}

std::vector<double> posteriors(const GmmModel& model, std::span<const float> x) {
  std::vector<double> xd(x.begin(), x.end());
  std::vector<double> gamma(model.num_components);
  posteriors(model, xd, gamma);
  return gamma;
}

double mean_log_likelihood(const GmmModel& model, const DescriptorSet& samples) {
  if (samples.dim() != model.dim) throw InputError("log-likelihood: dimension mismatch");
  if (samples.empty()) throw InputError("log-likelihood of an empty set");
  return e_step(model, samples).log_likelihood / static_cast<double>(samples.size());
}

void em_step(GmmModel& model, const DescriptorSet& samples, const GmmOptions& options) {
  const DataMoments dm = data_moments(samples, options.variance_floor_ratio);
  const Stats s = e_step(model, samples);
  m_step(model, s, samples.size(), options, dm.variance_floor);
  normalize_weights(model, options.weight_floor);
}

GmmModel fit_gmm(const DescriptorSet& samples, std::size_t K, const GmmOptions& options,
                 GmmFitReport* report) {
  const std::size_t n = samples.size();
  const std::size_t d = samples.dim();
  if (K == 0) throw InputError("GMM needs at least one component");
  if (n < options.min_samples_per_component * K) {
    throw InputError("GMM with " + std::to_string(K) + " components needs at least " +
                     std::to_string(options.min_samples_per_component * K) + " samples, got " +
                     std::to_string(n));
  }
  const DataMoments dm = data_moments(samples, options.variance_floor_ratio);

  std::vector<std::size_t> assignment;
  const std::vector<double> centers = kmeans(samples, K, options, assignment);

  GmmModel m;
  m.num_components = K;
  m.dim = d;
  m.weights.assign(K, 0.0);
  m.means = centers;
  m.sigmas.assign(K * d, 0.0);
  {
    std::vector<double> count(K, 0.0), sq(K * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = assignment[i];
      const auto r = samples.row(i);
      count[k] += 1.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = r[j] - centers[k * d + j];
        sq[k * d + j] += diff * diff;
      }
    }
    for (std::size_t k = 0; k < K; ++k) {
      m.weights[k] = count[k] / static_cast<double>(n);
      for (std::size_t j = 0; j < d; ++j) {
        const double var = count[k] > 1.0 ? sq[k * d + j] / count[k] : dm.variance[j];
        m.sigmas[k * d + j] = std::sqrt(std::max(var, dm.variance_floor));
      }
    }
    normalize_weights(m, options.weight_floor);
  }

  GmmFitReport local;
  GmmFitReport& rep = report != nullptr ? *report : local;
  rep = GmmFitReport{};
  std::vector<std::size_t> reseed_count(K, 0);
  constexpr std::size_t kMaxReseeds = 3;

  double previous = -std::numeric_limits<double>::infinity();
  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    const Stats s = e_step(m, samples);
    const double ll = s.log_likelihood / static_cast<double>(n);
    if (!std::isfinite(ll)) throw NumericError("GMM log-likelihood became non-finite");
    rep.log_likelihood.push_back(ll);
    if (iter > 0 && ll - previous < options.relative_tolerance * std::abs(previous)) {
      rep.converged = true;
      break;
    }
    previous = ll;
    const auto empty = m_step(m, s, n, options, dm.variance_floor);
    ++rep.iterations;
    if (!empty.empty()) {
      // Re-seed starved components at the worst-explained samples.
      std::vector<double> sample_ll(n);
      {
        const GmmEvaluator eval(m);
        std::vector<double> x(d), gamma(K);
        for (std::size_t i = 0; i < n; ++i) {
          const auto r = samples.row(i);
          std::copy(r.begin(), r.end(), x.begin());
          sample_ll[i] = eval.posteriors(x.data(), gamma.data());
        }
      }
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return sample_ll[a] < sample_ll[b]; });
      for (std::size_t e = 0; e < empty.size(); ++e) {
        const std::size_t k = empty[e];
        if (++reseed_count[k] > kMaxReseeds) {
          throw NumericError("GMM component " + std::to_string(k) +
                             " keeps collapsing; reduce K or add samples");
        }
        const auto r = samples.row(order[e % n]);
        for (std::size_t j = 0; j < d; ++j) {
          m.means[k * d + j] = r[j];
          m.sigmas[k * d + j] = std::sqrt(std::max(dm.variance[j], dm.variance_floor));
        }
        m.weights[k] = 1.0 / static_cast<double>(n);
        ++rep.reseeded_components;
      }
      previous = -std::numeric_limits<double>::infinity();
    }
    normalize_weights(m, options.weight_floor);
  }
  m.check();
  return m;
}

void save_gmm(const GmmModel& model, const std::string& path) {
  model.check();
  BinaryWriter w(path);
  w.magic("MPPG");
  w.u32(kGmmVersion);
  w.u32(static_cast<std::uint32_t>(model.num_components));
  w.u32(static_cast<std::uint32_t>(model.dim));
  w.f64_array(model.weights);
  w.f64_array(model.means);
  w.f64_array(model.sigmas);
  w.close();
}

GmmModel load_gmm(const std::string& path) {
  BinaryReader r(path);
  r.expect_magic("MPPG");
  const std::uint32_t version = r.u32();
  if (version != kGmmVersion) {
    throw FormatError(path + ": unsupported MPPG version " + std::to_string(version));
  }
  GmmModel m;
  m.num_components = r.u32();
  m.dim = r.u32();
  if (m.num_components == 0 || m.dim == 0 || m.num_components * m.dim > (1u << 26)) {
    throw FormatError(path + ": bad MPPG dimensions");
  }
  m.weights = r.f64_array(m.num_components);
  m.means = r.f64_array(m.num_components * m.dim);
  m.sigmas = r.f64_array(m.num_components * m.dim);
  try {
    m.check();
  } catch (const InputError& e) {
    throw FormatError(path + ": " + e.what());
  }
  return m;
}

}  // namespace mpp
