#include "xpb/history.hpp"

namespace xpb {

int TrainingHistory::best_auc_epoch() const {
    int best = 0;
    double best_value = -1.0;
    for (const auto& e : entries) {
        if (e.val_auc > best_value) {
            best_value = e.val_auc;
            best = e.epoch;
        }
    }
    return best;
}

int TrainingHistory::best_similarity_epoch() const {
    int best = 0;
    double best_value = -1.0;
    for (const auto& e : entries) {
        if (e.val_similarity && *e.val_similarity > best_value) {
            best_value = *e.val_similarity;
            best = e.epoch;
        }
    }
    return best;
}

}  // namespace xpb
