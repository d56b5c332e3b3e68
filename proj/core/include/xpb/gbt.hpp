#pragma once

#include <filesystem>
#include <functional>
#include <utility>
#include <vector>

#include "xpb/corpus.hpp"
#include "xpb/history.hpp"

namespace xpb::gbt {

struct GbtParams {
    int rounds = 200;
    int max_depth = 4;
    double shrinkage = 0.1;
    double l2_leaf_penalty = 1.0;
    double min_child_weight = 1.0;
    int checkpoint_interval = 10;

    void validate() const;  // throws ConfigError
};

/// Binary tree in an arena; node 0 is the root. Internal nodes route
/// x[feature] < threshold to `left`; leaves carry an unscaled logit weight.
struct DecisionTree {
    struct Node {
        int feature = -1;  // -1 marks a leaf
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        double gain = 0.0;
        double weight = 0.0;
    };
    std::vector<Node> nodes;

    bool empty() const { return nodes.empty(); }
    double value(const std::vector<int>& x) const;
};

struct GbtModel {
    corpus::Vocabulary vocabulary;
    double base_logit = 0.0;
    double shrinkage = 0.1;
    std::vector<DecisionTree> trees;
};

double predict_logit(const GbtModel& model, const std::vector<int>& counts);

/// Probability; throws DimensionError on a feature-length mismatch.
double predict_gbt(const GbtModel& model, const corpus::CountVector& x);

struct FeatureScore {
    int feature = 0;  // 0-based vocabulary entry position
    double score = 0.0;
};

/// Mean split gain per feature, descending, ties broken by feature index.
std::vector<FeatureScore> information_gain_importance(const GbtModel& model);

/// Optional per-checkpoint explainability probe, called on the prefix model.
using SimilarityProbe = std::function<double(const GbtModel&)>;

/// Second-order boosting on count features. History holds one entry per
/// checkpoint; the returned model is the checkpoint with best validation AUC.
std::pair<GbtModel, TrainingHistory> train_gbt(const corpus::Dataset& train,
                                               const corpus::Dataset& val,
                                               const GbtParams& params,
                                               const SimilarityProbe& probe = nullptr);

void save_gbt(const GbtModel& model, const std::filesystem::path& path);
GbtModel load_gbt(const std::filesystem::path& path);

}  // namespace xpb::gbt
