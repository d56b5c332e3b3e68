#pragma once

#include <optional>
#include <vector>

namespace xpb {

/// One tracked training checkpoint: a boosting checkpoint interval or an
/// LSTM epoch, both 1-based.
struct EpochStat {
    int epoch = 0;
    double train_loss = 0.0;
    double val_auc = 0.0;
    std::optional<double> val_similarity;
};

struct TrainingHistory {
    std::vector<EpochStat> entries;

    /// Earliest epoch attaining the maximum value; 0 when undefined.
    int best_auc_epoch() const;
    int best_similarity_epoch() const;
};

}  // namespace xpb
