#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "xpb/attrib.hpp"
#include "xpb/corpus.hpp"
#include "xpb/history.hpp"

namespace xpb::evalx {

struct SimilarityRow {
    std::int64_t id = 0;
    double similarity = 0.0;
    std::size_t ground_truth_size = 0;
};

/// Per-observation similarities plus their aggregates. Observations with an
/// empty ground-truth set are excluded from the rows and only counted.
struct SetSimilarityReport {
    std::vector<SimilarityRow> rows;
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::size_t excluded = 0;
};

/// Recomputes mean/min/max from the rows; the audit for report consistency.
SetSimilarityReport aggregate_rows(std::vector<SimilarityRow> rows, std::size_t excluded);

/// Token name per attribution unit: vocabulary order in count space, the
/// record's event tokens in sequence space. Throws DimensionError when the
/// score count does not match the space.
std::vector<std::string> unit_labels(const attrib::Attribution& attr,
                                     const corpus::Vocabulary& vocab,
                                     const corpus::EventSequence& record);

/// Overlap of the top-n attributed tokens with the ground-truth set, over
/// |ground_truth|. Units rank by |score| descending (ties: lower unit index
/// first); duplicate tokens are represented by their best-ranked unit.
double set_similarity(const attrib::Attribution& attr,
                      const std::vector<std::string>& unit_tokens,
                      const std::set<std::string>& ground_truth, std::size_t n);

/// Per-record top-n choice: sequence space measures against the record's
/// drivers with n = |drivers|; count space measures against the informative
/// (non-noise) vocabulary with n = that token count.
SetSimilarityReport local_similarity_sweep(const corpus::Dataset& ds,
                                           const std::vector<attrib::Attribution>& attributions,
                                           attrib::UnitSpace mode);

struct TokenImportance {
    std::string token;
    corpus::TokenCategory category = corpus::TokenCategory::Noise;
    double score = 0.0;  // mean |attribution| over observations holding the token
    int rank = 0;        // 1-based, descending score, ties by vocabulary order
};

struct GlobalImportance {
    attrib::Method method = attrib::Method::KernelShap;
    std::vector<TokenImportance> tokens;  // every vocabulary token, ranked
};

/// Mean absolute score per token over the observations where the token has a
/// unit; tokens that never appear score zero. All attributions must share one
/// method and resolve to records in `ds` by target id.
GlobalImportance global_importance(const corpus::Dataset& ds,
                                   const std::vector<attrib::Attribution>& attributions);

/// Model bindings the tracker evaluates each epoch: probabilities for the
/// whole validation split and an attribution for one record.
struct TrackedModel {
    std::function<std::vector<double>(const corpus::Dataset&)> score;
    std::function<attrib::Attribution(const corpus::EventSequence&)> attribute;
};

std::vector<std::int64_t> pick_subsample(const corpus::Dataset& val, std::size_t size,
                                         std::uint64_t seed);

/// Mean set similarity over the fixed id subsample; empty-ground-truth
/// records are skipped, mirroring the sweep.
double mean_subsample_similarity(
    const corpus::Dataset& val, const std::vector<std::int64_t>& ids,
    const std::function<attrib::Attribution(const corpus::EventSequence&)>& attribute,
    attrib::UnitSpace mode);

/// Joint predictive/explainability curve over training epochs: full-split
/// validation AUC next to subsample mean similarity, with the two argmax
/// epochs reported separately.
class EpochTracker {
  public:
    EpochTracker(corpus::Dataset validation, std::size_t subsample_size,
                 attrib::UnitSpace mode, std::uint64_t seed);

    const std::vector<std::int64_t>& subsample_ids() const { return ids_; }
    void observe(int epoch, const TrackedModel& model);
    const TrainingHistory& history() const { return history_; }
    int best_auc_epoch() const { return history_.best_auc_epoch(); }
    int best_similarity_epoch() const { return history_.best_similarity_epoch(); }

  private:
    corpus::Dataset val_;
    std::vector<std::int64_t> ids_;
    attrib::UnitSpace mode_;
    TrainingHistory history_;
};

/// CSV emitters for the report stage; plain comma separation, LF line ends,
/// fixed significant digits, so byte-identical reruns are checkable.
void write_local_similarity_csv(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string, SetSimilarityReport>>& by_method);
void write_global_importance_csv(const std::filesystem::path& path,
                                 const std::vector<std::pair<std::string, GlobalImportance>>& by_method);
void write_epoch_curve_csv(const std::filesystem::path& path,
                           const std::vector<std::pair<std::string, TrainingHistory>>& by_model);

}  // namespace xpb::evalx
