#include "mpp/metrics.h"

#include <algorithm>
#include <numeric>

#include "mpp/errors.h"

namespace mpp {

double average_precision_11pt(std::span<const double> scores, const std::vector<bool>& relevant,
                              bool* no_positives) {
  if (scores.size() != relevant.size()) {
    throw InputError("average_precision_11pt: scores and relevance differ in length");
  }
  const std::size_t n = scores.size();
  const std::size_t positives = static_cast<std::size_t>(std::count(relevant.begin(), relevant.end(), true));
  if (no_positives) *no_positives = positives == 0;
  if (positives == 0) return 0.0;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  // precision[i], recall[i] after the top i+1 items.
  std::vector<double> precision(n), recall(n);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (relevant[order[i]]) ++hits;
    precision[i] = static_cast<double>(hits) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(hits) / static_cast<double>(positives);
  }
  // Suffix maximum of precision.
  for (std::size_t i = n - 1; i-- > 0;) precision[i] = std::max(precision[i], precision[i + 1]);

  double sum = 0.0;
  for (int level = 0; level <= 10; ++level) {
    const double r = level / 10.0;
    const auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / 11.0;
}

double top1_accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> truth) {
  if (predicted.size() != truth.size() || truth.empty()) {
    throw InputError("top1_accuracy: empty or mismatched inputs");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += predicted[i] == truth[i];
  return static_cast<double>(correct) / static_cast<double>(truth.size());
}

double mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

}  // namespace mpp
