#include "xpb/evalx.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include "xpb/metrics.hpp"
#include "xpb/rng.hpp"

namespace xpb::evalx {

namespace {

std::map<std::int64_t, const corpus::EventSequence*> record_index(const corpus::Dataset& ds) {
    std::map<std::int64_t, const corpus::EventSequence*> out;
    for (const auto& r : ds.records) out.emplace(r.id, &r);
    return out;
}

std::set<std::string> informative_tokens(const corpus::Vocabulary& vocab) {
    std::set<std::string> out;
    for (const auto& e : vocab.entries())
        if (e.category != corpus::TokenCategory::Noise) out.insert(e.name);
    return out;
}

std::set<std::string> ground_truth_for(const corpus::EventSequence& record,
                                       const std::set<std::string>& informative,
                                       attrib::UnitSpace mode) {
    if (mode == attrib::UnitSpace::SequenceSpace)
        return {record.drivers.begin(), record.drivers.end()};
    return informative;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::ofstream open_csv(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path.string());
    return out;
}

}  // namespace

SetSimilarityReport aggregate_rows(std::vector<SimilarityRow> rows, std::size_t excluded) {
    SetSimilarityReport report;
    report.rows = std::move(rows);
    report.excluded = excluded;
    if (report.rows.empty()) return report;
    double sum = 0.0;
    report.min = report.rows.front().similarity;
    report.max = report.rows.front().similarity;
    for (const auto& row : report.rows) {
        sum += row.similarity;
        report.min = std::min(report.min, row.similarity);
        report.max = std::max(report.max, row.similarity);
    }
    report.mean = sum / static_cast<double>(report.rows.size());
    return report;
}

std::vector<std::string> unit_labels(const attrib::Attribution& attr,
                                     const corpus::Vocabulary& vocab,
                                     const corpus::EventSequence& record) {
    std::vector<std::string> labels;
    if (attr.space == attrib::UnitSpace::CountSpace) {
        if (attr.scores.size() != vocab.size())
            throw DimensionError("count-space attribution width differs from vocabulary");
        for (const auto& e : vocab.entries()) labels.push_back(e.name);
    } else {
        if (attr.scores.size() != record.events.size())
            throw DimensionError("sequence-space attribution length differs from record");
        for (const auto& e : record.events) labels.push_back(e.token);
    }
    return labels;
}

double set_similarity(const attrib::Attribution& attr,
                      const std::vector<std::string>& unit_tokens,
                      const std::set<std::string>& ground_truth, std::size_t n) {
    if (n == 0) throw EvaluationError("top-n must be at least 1");
    if (ground_truth.empty()) throw EvaluationError("empty ground truth is exclusion, not scoring");
    if (unit_tokens.size() != attr.scores.size())
        throw DimensionError("one token label per attribution unit required");

    std::vector<std::size_t> order(attr.scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(attr.scores[a]) > std::abs(attr.scores[b]);
    });

    // Best-ranked unit represents a repeated token.
    std::set<std::string> seen;
    std::size_t hits = 0, taken = 0;
    for (std::size_t u : order) {
        if (!seen.insert(unit_tokens[u]).second) continue;
        if (ground_truth.count(unit_tokens[u]) > 0) ++hits;
        if (++taken == n) break;
    }
    return static_cast<double>(hits) / static_cast<double>(ground_truth.size());
}

SetSimilarityReport local_similarity_sweep(const corpus::Dataset& ds,
                                           const std::vector<attrib::Attribution>& attributions,
                                           attrib::UnitSpace mode) {
    std::map<std::int64_t, const attrib::Attribution*> by_id;
    for (const auto& a : attributions)
        if (!by_id.emplace(a.target, &a).second)
            throw EvaluationError("duplicate attribution target id");

    const auto informative = informative_tokens(ds.vocabulary);
    std::vector<SimilarityRow> rows;
    std::size_t excluded = 0;
    for (const auto& record : ds.records) {
        const auto truth = ground_truth_for(record, informative, mode);
        if (truth.empty()) {
            ++excluded;
            continue;
        }
        const auto it = by_id.find(record.id);
        if (it == by_id.end()) throw MissingAttribution(record.id);
        const attrib::Attribution& attr = *it->second;
        if (attr.space != mode)
            throw EvaluationError("attribution space does not match the sweep mode");
        const double sim =
            set_similarity(attr, unit_labels(attr, ds.vocabulary, record), truth, truth.size());
        rows.push_back({record.id, sim, truth.size()});
    }
    return aggregate_rows(std::move(rows), excluded);
}

GlobalImportance global_importance(const corpus::Dataset& ds,
                                   const std::vector<attrib::Attribution>& attributions) {
    if (attributions.empty()) throw EvaluationError("no attributions to aggregate");
    for (const auto& a : attributions)
        if (a.method != attributions.front().method)
            throw EvaluationError("mixed attribution methods in one aggregation");

    const auto records = record_index(ds);
    const std::size_t V = ds.vocabulary.size();
    std::vector<double> sums(V, 0.0);
    std::vector<std::size_t> holders(V, 0);
    std::vector<double> per_obs(V);
    for (const auto& attr : attributions) {
        const auto it = records.find(attr.target);
        if (it == records.end())
            throw EvaluationError("attribution targets an unknown record id");
        const auto labels = unit_labels(attr, ds.vocabulary, *it->second);
        std::fill(per_obs.begin(), per_obs.end(), 0.0);
        std::vector<std::uint8_t> present(V, 0);
        for (std::size_t u = 0; u < labels.size(); ++u) {
            const std::size_t pos = static_cast<std::size_t>(ds.vocabulary.index_of(labels[u])) - 1;
            per_obs[pos] += std::abs(attr.scores[u]);
            present[pos] = 1;
        }
        for (std::size_t pos = 0; pos < V; ++pos) {
            if (!present[pos]) continue;
            sums[pos] += per_obs[pos];
            ++holders[pos];
        }
    }

    GlobalImportance out;
    out.method = attributions.front().method;
    std::vector<std::size_t> order(V);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double sa = holders[a] ? sums[a] / static_cast<double>(holders[a]) : 0.0;
        const double sb = holders[b] ? sums[b] / static_cast<double>(holders[b]) : 0.0;
        return sa > sb;
    });
    out.tokens.resize(V);
    for (std::size_t r = 0; r < V; ++r) {
        const std::size_t pos = order[r];
        const auto& entry = ds.vocabulary.entries()[pos];
        out.tokens[r] = {entry.name, entry.category,
                         holders[pos] ? sums[pos] / static_cast<double>(holders[pos]) : 0.0,
                         static_cast<int>(r) + 1};
    }
    return out;
}

std::vector<std::int64_t> pick_subsample(const corpus::Dataset& val, std::size_t size,
                                         std::uint64_t seed) {
    if (size == 0) throw ConfigError("subsample size must be positive");
    if (val.records.empty()) throw DegenerateDataset("empty validation split");
    Rng rng(seed);
    const auto picks = rng.sample_without_replacement(val.records.size(), size);
    std::vector<std::int64_t> ids;
    ids.reserve(picks.size());
    for (std::size_t i : picks) ids.push_back(val.records[i].id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

double mean_subsample_similarity(
    const corpus::Dataset& val, const std::vector<std::int64_t>& ids,
    const std::function<attrib::Attribution(const corpus::EventSequence&)>& attribute,
    attrib::UnitSpace mode) {
    const auto records = record_index(val);
    const auto informative = informative_tokens(val.vocabulary);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::int64_t id : ids) {
        const auto it = records.find(id);
        if (it == records.end()) throw EvaluationError("subsample id missing from validation split");
        const auto& record = *it->second;
        const auto truth = ground_truth_for(record, informative, mode);
        if (truth.empty()) continue;
        const auto attr = attribute(record);
        sum += set_similarity(attr, unit_labels(attr, val.vocabulary, record), truth, truth.size());
        ++n;
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

EpochTracker::EpochTracker(corpus::Dataset validation, std::size_t subsample_size,
                           attrib::UnitSpace mode, std::uint64_t seed)
    : val_(std::move(validation)),
      ids_(pick_subsample(val_, subsample_size, seed)),
      mode_(mode) {}

void EpochTracker::observe(int epoch, const TrackedModel& model) {
    const auto probs = model.score(val_);
    if (probs.size() != val_.records.size())
        throw EvaluationError("tracked model scored the wrong record count");
    std::vector<int> labels;
    labels.reserve(val_.records.size());
    for (const auto& r : val_.records) labels.push_back(r.label);
    EpochStat stat;
    stat.epoch = epoch;
    stat.val_auc = metrics::auc(labels, probs);
    stat.val_similarity = mean_subsample_similarity(val_, ids_, model.attribute, mode_);
    history_.entries.push_back(stat);
}

void write_local_similarity_csv(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string, SetSimilarityReport>>& by_method) {
    auto out = open_csv(path);
    out << "method,id,similarity,n\n";
    for (const auto& [method, report] : by_method)
        for (const auto& row : report.rows)
            out << method << ',' << row.id << ',' << fmt(row.similarity) << ','
                << row.ground_truth_size << '\n';
}

void write_global_importance_csv(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string, GlobalImportance>>& by_method) {
    auto out = open_csv(path);
    out << "method,token,category,score,rank\n";
    for (const auto& [method, global] : by_method)
        for (const auto& t : global.tokens)
            out << method << ',' << t.token << ',' << corpus::category_letter(t.category) << ','
                << fmt(t.score) << ',' << t.rank << '\n';
}

void write_epoch_curve_csv(const std::filesystem::path& path,
                           const std::vector<std::pair<std::string, TrainingHistory>>& by_model) {
    auto out = open_csv(path);
    out << "model,epoch,auc,similarity\n";
    for (const auto& [model, history] : by_model)
        for (const auto& e : history.entries) {
            out << model << ',' << e.epoch << ',' << fmt(e.val_auc) << ',';
            if (e.val_similarity) out << fmt(*e.val_similarity);
            out << '\n';
        }
}

}  // namespace xpb::evalx
