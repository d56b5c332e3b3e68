#pragma once

#include <vector>

#include "xpb/errors.hpp"

namespace xpb::metrics {

double sigmoid(double z);

/// Inverse sigmoid; p is clamped away from {0,1} by 1e-12.
double logit(double p);

/// Mann-Whitney statistic: fraction of (positive, negative) pairs ranked
/// correctly, ties at half credit. Computed via midranks, which is exact.
/// Throws UndefinedMetric when a class is missing or lengths differ.
double auc(const std::vector<int>& labels, const std::vector<double>& scores);

/// Mean binary cross-entropy of probabilities against {0,1} labels.
double mean_log_loss(const std::vector<int>& labels, const std::vector<double>& probs);

}  // namespace xpb::metrics
