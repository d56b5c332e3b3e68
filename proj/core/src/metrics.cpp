#include "xpb/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace xpb::metrics {

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double logit(double p) {
    p = std::clamp(p, 1e-12, 1.0 - 1e-12);
    return std::log(p / (1.0 - p));
}

double auc(const std::vector<int>& labels, const std::vector<double>& scores) {
    if (labels.size() != scores.size())
        throw UndefinedMetric("label/score length mismatch");
    const std::size_t n = labels.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Midranks keep tied groups at half credit; they are half-integers, so the
    // arithmetic below stays exact in doubles at this scale.
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
        i = j + 1;
    }

    double pos = 0, rank_sum = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (labels[k] == 1) {
            pos += 1;
            rank_sum += rank[k];
        }
    }
    const double neg = static_cast<double>(n) - pos;
    if (pos == 0 || neg == 0) throw UndefinedMetric("auc needs both classes");
    const double u = rank_sum - pos * (pos + 1) / 2.0;
    return u / (pos * neg);
}

double mean_log_loss(const std::vector<int>& labels, const std::vector<double>& probs) {
    if (labels.size() != probs.size())
        throw UndefinedMetric("label/probability length mismatch");
    if (labels.empty()) throw UndefinedMetric("log loss of an empty set");
    double sum = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double p = std::clamp(probs[i], 1e-12, 1.0 - 1e-12);
        sum += labels[i] == 1 ? -std::log(p) : -std::log(1.0 - p);
    }
    return sum / static_cast<double>(labels.size());
}

}  // namespace xpb::metrics
