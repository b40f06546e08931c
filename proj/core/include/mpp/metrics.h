#ifndef MPP_METRICS_H_
#define MPP_METRICS_H_

#include <cstddef>
#include <span>
#include <vector>

namespace mpp {

// 11-point interpolated average precision: mean over recall levels
// 0, 0.1, ..., 1 of the best precision reached at recall >= level. Items are
// ranked by descending score; equal scores keep their input order.
// Returns 0 (and sets *no_positives if given) when nothing is relevant.
double average_precision_11pt(std::span<const double> scores, const std::vector<bool>& relevant,
                              bool* no_positives = nullptr);

// Fraction of predicted == truth.
double top1_accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> truth);

double mean(std::span<const double> values);

}  // namespace mpp

#endif  // MPP_METRICS_H_
