#include "mpp/svm.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <string_view>
#include <unordered_map>

#include "mpp/binary_io.h"
#include "mpp/errors.h"
#include "mpp/metrics.h"
#include "mpp/parallel.h"
#include "mpp/random.h"

namespace mpp {
namespace {

constexpr std::uint32_t kModelVersion = 1;

// Distinct (vector, label set) pairs with their multiplicities.
struct TrainingSet {
  std::size_t dim = 0;
  std::vector<const std::vector<double>*> rows;
  std::vector<std::vector<std::size_t>> labels;  // sorted
  std::vector<double> weight;                    // multiplicity / mean multiplicity
  double max_norm = 0.0;
};

TrainingSet deduplicate(const std::vector<PooledRepresentation>& x, const LabelSets& labels,
                        std::span<const std::size_t> subset) {
  TrainingSet ts;
  ts.dim = x[subset.front()].size();
  std::unordered_map<std::size_t, std::vector<std::size_t>> buckets;
  std::vector<double> count;
  for (std::size_t i : subset) {
    const auto& payload = x[i].payload;
    std::vector<std::size_t> label = labels[i];
    std::sort(label.begin(), label.end());
    const std::size_t h = std::hash<std::string_view>{}(std::string_view(
        reinterpret_cast<const char*>(payload.data()), payload.size() * sizeof(double)));
    auto& bucket = buckets[h];
    bool merged = false;
    for (std::size_t u : bucket) {
      if (ts.labels[u] == label &&
          std::memcmp(ts.rows[u]->data(), payload.data(), payload.size() * sizeof(double)) == 0) {
        count[u] += 1.0;
        merged = true;
        break;
      }
    }
    if (merged) continue;
    bucket.push_back(ts.rows.size());
    ts.rows.push_back(&payload);
    ts.labels.push_back(std::move(label));
    count.push_back(1.0);
    double sq = 0.0;
    for (double v : payload) sq += v * v;
    ts.max_norm = std::max(ts.max_norm, std::sqrt(sq));
  }
  const double mean_count = static_cast<double>(subset.size()) / static_cast<double>(count.size());
  for (double c : count) ts.weight.push_back(c / mean_count);
  return ts;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Exact minimizer over b of sum_i c_i max(0, 1 - y_i (s_i + b)). When the
// minimum is attained on an interval, its midpoint.
double optimal_bias(std::span<const double> s, std::span<const double> y,
                    std::span<const double> c) {
  const std::size_t n = s.size();
  std::vector<std::pair<double, double>> breaks(n);  // (position, slope increase)
  double slope = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    breaks[i] = {y[i] > 0 ? 1.0 - s[i] : -1.0 - s[i], c[i]};
    if (y[i] > 0) slope -= c[i];
    total += c[i];
  }
  std::sort(breaks.begin(), breaks.end());
  const double eps = 1e-12 * total;
  if (slope >= -eps) return breaks.empty() ? 0.0 : breaks.front().first;  // no positives
  for (std::size_t i = 0; i < n; ++i) {
    slope += breaks[i].second;
    if (slope > eps) return breaks[i].first;
    if (slope >= -eps) {
      // Flat between this break and the next distinct one.
      std::size_t j = i + 1;
      while (j < n && breaks[j].first == breaks[i].first) ++j;
      return j < n ? 0.5 * (breaks[i].first + breaks[j].first) : breaks[i].first;
    }
  }
  return breaks.back().first;
}

struct BinaryResult {
  std::vector<double> w;
  double b = 0.0;
  std::vector<double> objective;
};

BinaryResult train_binary(const TrainingSet& ts, std::size_t cls, double lambda,
                          std::size_t epochs, std::uint64_t seed) {
  const std::size_t n = ts.rows.size();
  const std::size_t d = ts.dim;
  std::vector<double> y(n), margins(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = std::binary_search(ts.labels[i].begin(), ts.labels[i].end(), cls) ? 1.0 : -1.0;
  }

  // w = scale * v; |v|^2 tracked incrementally.
  std::vector<double> v(d, 0.0);
  double scale = 1.0;
  double v_sq = 0.0;
  double b = 0.0;
  const double radius = 1.0 / std::sqrt(lambda);
  const double bias_bound = ts.max_norm * radius + 1.0;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  BinaryResult result;
  std::vector<double> w_sum(d, 0.0), w_bar(d);
  std::size_t t = 0;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t i : order) {
      ++t;
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      const std::span<const double> xi(*ts.rows[i]);
      const double margin = y[i] * (scale * dot(v, xi) + b);
      const double shrink = 1.0 - eta * lambda;
      if (shrink <= 0.0) {
        std::fill(v.begin(), v.end(), 0.0);
        scale = 1.0;
        v_sq = 0.0;
      } else {
        scale *= shrink;
      }
      if (margin < 1.0) {
        const double step = eta * ts.weight[i] * y[i];
        const double a = step / scale;
        double vx = 0.0, xx = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          vx += v[j] * xi[j];
          xx += xi[j] * xi[j];
        }
        for (std::size_t j = 0; j < d; ++j) v[j] += a * xi[j];
        v_sq = std::max(0.0, v_sq + 2.0 * a * vx + a * a * xx);
        b = std::clamp(b + step, -bias_bound, bias_bound);
      }
      const double norm = scale * std::sqrt(v_sq);
      if (norm > radius) scale *= radius / norm;
      // Fold the scale back in before it underflows.
      if (scale < 1e-100) {
        for (double& vj : v) vj *= scale;
        v_sq *= scale * scale;
        scale = 1.0;
      }
    }

    // Candidate: mean of the epoch-end iterates, with its exact bias. The
    // model kept is the best candidate so far by primal objective.
    for (std::size_t j = 0; j < d; ++j) w_sum[j] += scale * v[j];
    const double inv_epochs = 1.0 / static_cast<double>(epoch + 1);
    double w_sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      w_bar[j] = w_sum[j] * inv_epochs;
      w_sq += w_bar[j] * w_bar[j];
    }
    for (std::size_t i = 0; i < n; ++i) margins[i] = dot(w_bar, *ts.rows[i]);
    const double b_bar = optimal_bias(margins, y, ts.weight);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      loss += ts.weight[i] * std::max(0.0, 1.0 - y[i] * (margins[i] + b_bar));
    }
    const double objective = 0.5 * lambda * w_sq + loss / static_cast<double>(n);
    if (result.objective.empty() || objective < result.objective.back()) {
      result.w = w_bar;
      result.b = b_bar;
      result.objective.push_back(objective);
    } else {
      result.objective.push_back(result.objective.back());
    }
    // The iterate itself continues from its own exact bias.
    for (std::size_t i = 0; i < n; ++i) margins[i] = scale * dot(v, *ts.rows[i]);
    b = optimal_bias(margins, y, ts.weight);
  }
  return result;
}

void check_inputs(const std::vector<PooledRepresentation>& x, const LabelSets& labels,
                  const std::vector<std::string>& classes) {
  if (classes.size() < 2) throw InputError("train_ovr needs at least two classes");
  if (x.empty()) throw InputError("train_ovr: no training samples");
  if (x.size() != labels.size()) throw InputError("train_ovr: sample and label counts differ");
  const std::size_t dim = x.front().size();
  if (dim == 0) throw InputError("train_ovr: empty representation");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].size() != dim) throw InputError("train_ovr: representations differ in length");
    if (x[i].strategy != x.front().strategy) {
      throw InputError("train_ovr: mixed pooling strategies (" +
                       std::string(pool_strategy_name(x.front().strategy)) + " and " +
                       pool_strategy_name(x[i].strategy) + ")");
    }
    for (double v : x[i].payload) {
      if (!std::isfinite(v)) throw InputError("train_ovr: non-finite input value");
    }
    for (std::size_t l : labels[i]) {
      if (l >= classes.size()) throw InputError("train_ovr: label out of range");
    }
  }
}

LinearModel train_subset(const std::vector<PooledRepresentation>& x, const LabelSets& labels,
                         const std::vector<std::string>& classes, std::span<const std::size_t> subset,
                         double lambda, const SvmOptions& options) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw ConfigError("SVM lambda must be positive, got " + std::to_string(lambda));
  }
  if (options.epochs == 0) throw ConfigError("SVM epochs must be >= 1");
  const TrainingSet ts = deduplicate(x, labels, subset);
  LinearModel model;
  model.classes = classes;
  model.dim = ts.dim;
  model.strategy = x[subset.front()].strategy;
  model.lambda = lambda;
  model.epochs = options.epochs;
  std::vector<BinaryResult> results(classes.size());
  parallel_for(classes.size(), [&](std::size_t c) {
    results[c] = train_binary(ts, c, lambda, options.epochs, derive_seed(options.seed, c));
  });
  for (auto& r : results) {
    model.weights.insert(model.weights.end(), r.w.begin(), r.w.end());
    model.biases.push_back(r.b);
    model.objective.push_back(std::move(r.objective));
  }
  return model;
}

LabelSets to_sets(const std::vector<std::size_t>& labels) {
  LabelSets sets;
  sets.reserve(labels.size());
  for (std::size_t l : labels) sets.push_back({l});
  return sets;
}

}  // namespace

double select_lambda(const std::vector<PooledRepresentation>& x, const LabelSets& labels,
                     const std::vector<std::string>& classes, const SvmOptions& options) {
  check_inputs(x, labels, classes);
  if (options.lambda_grid.empty()) throw ConfigError("empty lambda grid");
  const std::size_t folds = std::max<std::size_t>(2, std::min(options.cv_folds, x.size()));
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(options.seed, 0xCF));
  rng.shuffle(std::span<std::size_t>(order));
  const bool single_label =
      std::all_of(labels.begin(), labels.end(), [](const auto& l) { return l.size() == 1; });

  double best_lambda = options.lambda_grid.front();
  double best_score = -1.0;
  for (double lambda : options.lambda_grid) {
    std::vector<double> fold_scores;
    for (std::size_t f = 0; f < folds; ++f) {
      std::vector<std::size_t> train, held;
      for (std::size_t i = 0; i < order.size(); ++i) (i % folds == f ? held : train).push_back(order[i]);
      std::sort(train.begin(), train.end());
      std::sort(held.begin(), held.end());
      if (train.empty() || held.empty()) continue;
      const LinearModel m = train_subset(x, labels, classes, train, lambda, options);
      if (single_label) {
        std::vector<std::size_t> pred, truth;
        for (std::size_t i : held) {
          pred.push_back(predict(m, x[i]));
          truth.push_back(labels[i].front());
        }
        fold_scores.push_back(top1_accuracy(pred, truth));
      } else {
        std::vector<double> aps;
        for (std::size_t c = 0; c < classes.size(); ++c) {
          std::vector<double> s;
          std::vector<bool> rel;
          for (std::size_t i : held) {
            s.push_back(score(m, x[i])[c]);
            rel.push_back(std::find(labels[i].begin(), labels[i].end(), c) != labels[i].end());
          }
          bool none = false;
          const double ap = average_precision_11pt(s, rel, &none);
          if (!none) aps.push_back(ap);
        }
        fold_scores.push_back(mean(aps));
      }
    }
    const double cv = mean(fold_scores);
    if (cv >= best_score) {
      if (cv > best_score || lambda > best_lambda) best_lambda = lambda;
      best_score = cv;
    }
  }
  return best_lambda;
}

LinearModel train_ovr(const std::vector<PooledRepresentation>& x, const LabelSets& labels,
                      const std::vector<std::string>& classes, const SvmOptions& options) {
  check_inputs(x, labels, classes);
  const double lambda =
      options.lambda > 0.0 ? options.lambda : select_lambda(x, labels, classes, options);
  std::vector<std::size_t> all(x.size());
  std::iota(all.begin(), all.end(), 0);
  return train_subset(x, labels, classes, all, lambda, options);
}

LinearModel train_ovr(const std::vector<PooledRepresentation>& x,
                      const std::vector<std::size_t>& labels,
                      const std::vector<std::string>& classes, const SvmOptions& options) {
  return train_ovr(x, to_sets(labels), classes, options);
}

std::vector<double> score(const LinearModel& model, std::span<const double> x) {
  if (x.size() != model.dim) {
    throw InputError("score: representation length " + std::to_string(x.size()) +
                     " does not match model dimension " + std::to_string(model.dim));
  }
  std::vector<double> s(model.num_classes());
  for (std::size_t c = 0; c < s.size(); ++c) s[c] = dot(model.w(c), x) + model.biases[c];
  return s;
}

std::vector<double> score(const LinearModel& model, const PooledRepresentation& x) {
  return score(model, std::span<const double>(x.payload));
}

std::size_t predict(const LinearModel& model, const PooledRepresentation& x) {
  const auto s = score(model, x);
  return static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
}

void save_linear_model(const LinearModel& model, const std::string& path) {
  BinaryWriter w(path);
  w.magic("MPPS");
  w.u32(kModelVersion);
  w.u32(static_cast<std::uint32_t>(model.num_classes()));
  w.u32(static_cast<std::uint32_t>(model.dim));
  w.u8(static_cast<std::uint8_t>(model.strategy));
  w.f64(model.lambda);
  w.u32(static_cast<std::uint32_t>(model.epochs));
  for (const auto& name : model.classes) w.str(name);
  for (std::size_t c = 0; c < model.num_classes(); ++c) {
    w.f32(static_cast<float>(model.biases[c]));
    w.f64(model.final_objective(c));
    w.f32_array(model.w(c));
  }
  w.close();
}

LinearModel load_linear_model(const std::string& path) {
  BinaryReader r(path);
  r.expect_magic("MPPS");
  const std::uint32_t version = r.u32();
  if (version != kModelVersion) {
    throw FormatError(path + ": unsupported MPPS version " + std::to_string(version));
  }
  LinearModel model;
  const std::uint32_t n = r.u32();
  model.dim = r.u32();
  if (n < 2 || n > 100000 || model.dim == 0 || model.dim > (1u << 30)) {
    throw FormatError(path + ": implausible MPPS header");
  }
  const std::uint8_t tag = r.u8();
  if (tag > static_cast<std::uint8_t>(PoolStrategy::kMppSp)) {
    throw FormatError(path + ": unknown strategy tag");
  }
  model.strategy = static_cast<PoolStrategy>(tag);
  model.lambda = r.f64();
  model.epochs = r.u32();
  for (std::uint32_t c = 0; c < n; ++c) model.classes.push_back(r.str());
  for (std::uint32_t c = 0; c < n; ++c) {
    model.biases.push_back(r.f32());
    model.objective.push_back({r.f64()});
    const auto w = r.f32_array_as_f64(model.dim);
    model.weights.insert(model.weights.end(), w.begin(), w.end());
  }
  return model;
}

}  // namespace mpp
