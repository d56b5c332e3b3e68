#include "xpb/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "xpb/metrics.hpp"

namespace xpb::gbt {

namespace {

using json = nlohmann::ordered_json;

struct Encoded {
    std::vector<std::vector<int>> rows;
    std::vector<int> labels;
};

Encoded encode(const corpus::Dataset& ds) {
    Encoded out;
    out.rows.reserve(ds.records.size());
    out.labels.reserve(ds.records.size());
    for (const auto& r : ds.records) {
        out.rows.push_back(corpus::encode_counts(r, ds.vocabulary).values);
        out.labels.push_back(r.label);
    }
    return out;
}

class TreeBuilder {
public:
    TreeBuilder(const Encoded& data, const std::vector<double>& g,
                const std::vector<double>& h, const GbtParams& params)
        : data_(data), g_(g), h_(h), params_(params) {}

    DecisionTree build() {
        std::vector<std::size_t> all(data_.rows.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        tree_ = {};
        grow(all, 0);
        return std::move(tree_);
    }

private:
    struct Split {
        int feature = -1;
        int cut = 0;  // split sends x[feature] <= cut to the left
        double gain = 0.0;
    };

    static double leaf_objective(double G, double H, double lambda) {
        return G * G / (H + lambda);
    }

    int grow(const std::vector<std::size_t>& rows, int depth) {
        double G = 0.0, H = 0.0;
        for (std::size_t i : rows) {
            G += g_[i];
            H += h_[i];
        }

        Split best;
        if (depth < params_.max_depth) best = find_split(rows, G, H);

        const int self = static_cast<int>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        if (best.feature < 0) {
            tree_.nodes[self].weight = -G / (H + params_.l2_leaf_penalty);
            return self;
        }

        std::vector<std::size_t> left, right;
        for (std::size_t i : rows)
            (data_.rows[i][static_cast<std::size_t>(best.feature)] <= best.cut ? left : right)
                .push_back(i);

        tree_.nodes[self].feature = best.feature;
        tree_.nodes[self].threshold = best.cut + 0.5;
        tree_.nodes[self].gain = best.gain;
        const int l = grow(left, depth + 1);
        tree_.nodes[self].left = l;
        const int r = grow(right, depth + 1);
        tree_.nodes[self].right = r;
        return self;
    }

    Split find_split(const std::vector<std::size_t>& rows, double G, double H) {
        const double lambda = params_.l2_leaf_penalty;
        const std::size_t n_features = data_.rows.empty() ? 0 : data_.rows[0].size();
        const double parent = leaf_objective(G, H, lambda);

        Split best;
        std::vector<double> gh(corpus::kMaxRecordLength + 1);
        std::vector<double> hh(corpus::kMaxRecordLength + 1);
        for (std::size_t f = 0; f < n_features; ++f) {
            std::fill(gh.begin(), gh.end(), 0.0);
            std::fill(hh.begin(), hh.end(), 0.0);
            int max_value = 0;
            for (std::size_t i : rows) {
                const int v = data_.rows[i][f];
                gh[static_cast<std::size_t>(v)] += g_[i];
                hh[static_cast<std::size_t>(v)] += h_[i];
                max_value = std::max(max_value, v);
            }
            double GL = 0.0, HL = 0.0;
            for (int c = 0; c < max_value; ++c) {
                GL += gh[static_cast<std::size_t>(c)];
                HL += hh[static_cast<std::size_t>(c)];
                const double HR = H - HL;
                if (HL < params_.min_child_weight || HR < params_.min_child_weight) continue;
                const double GR = G - GL;
                const double gain =
                    0.5 * (leaf_objective(GL, HL, lambda) + leaf_objective(GR, HR, lambda) -
                           parent);
                if (gain > best.gain) best = {static_cast<int>(f), c, gain};
            }
        }
        return best;
    }

    const Encoded& data_;
    const std::vector<double>& g_;
    const std::vector<double>& h_;
    const GbtParams& params_;
    DecisionTree tree_;
};

json tree_to_json(const DecisionTree& tree, int at) {
    const auto& n = tree.nodes[static_cast<std::size_t>(at)];
    if (n.feature < 0) return {{"weight", n.weight}};
    return {{"feature", n.feature},
            {"threshold", n.threshold},
            {"gain", n.gain},
            {"left", tree_to_json(tree, n.left)},
            {"right", tree_to_json(tree, n.right)}};
}

int tree_from_json(const json& j, DecisionTree& tree) {
    const int self = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    if (j.contains("weight")) {
        tree.nodes[static_cast<std::size_t>(self)].weight = j["weight"].get<double>();
        return self;
    }
    tree.nodes[static_cast<std::size_t>(self)].feature = j.at("feature").get<int>();
    tree.nodes[static_cast<std::size_t>(self)].threshold = j.at("threshold").get<double>();
    tree.nodes[static_cast<std::size_t>(self)].gain = j.at("gain").get<double>();
    const int l = tree_from_json(j.at("left"), tree);
    tree.nodes[static_cast<std::size_t>(self)].left = l;
    const int r = tree_from_json(j.at("right"), tree);
    tree.nodes[static_cast<std::size_t>(self)].right = r;
    return self;
}

}  // namespace

void GbtParams::validate() const {
    if (rounds < 0) throw ConfigError("rounds must be non-negative");
    if (max_depth < 1) throw ConfigError("max depth must be at least 1");
    if (shrinkage <= 0.0 || shrinkage > 1.0) throw ConfigError("shrinkage must lie in (0, 1]");
    if (l2_leaf_penalty < 0.0) throw ConfigError("l2 penalty must be non-negative");
    if (min_child_weight < 0.0) throw ConfigError("min child weight must be non-negative");
    if (checkpoint_interval < 1) throw ConfigError("checkpoint interval must be positive");
}

double DecisionTree::value(const std::vector<int>& x) const {
    std::size_t at = 0;
    while (nodes[at].feature >= 0) {
        const auto& n = nodes[at];
        at = static_cast<std::size_t>(
            x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right);
    }
    return nodes[at].weight;
}

double predict_logit(const GbtModel& model, const std::vector<int>& counts) {
    double z = model.base_logit;
    for (const auto& t : model.trees) z += model.shrinkage * t.value(counts);
    return z;
}

double predict_gbt(const GbtModel& model, const corpus::CountVector& x) {
    if (x.values.size() != model.vocabulary.size())
        throw DimensionError("count vector length does not match the vocabulary");
    return metrics::sigmoid(predict_logit(model, x.values));
}

std::vector<FeatureScore> information_gain_importance(const GbtModel& model) {
    const std::size_t V = model.vocabulary.size();
    std::vector<double> sum(V, 0.0);
    std::vector<int> uses(V, 0);
    for (const auto& t : model.trees) {
        for (const auto& n : t.nodes) {
            if (n.feature >= 0) {
                sum[static_cast<std::size_t>(n.feature)] += n.gain;
                ++uses[static_cast<std::size_t>(n.feature)];
            }
        }
    }
    std::vector<FeatureScore> out(V);
    for (std::size_t f = 0; f < V; ++f)
        out[f] = {static_cast<int>(f), uses[f] > 0 ? sum[f] / uses[f] : 0.0};
    std::stable_sort(out.begin(), out.end(), [](const FeatureScore& a, const FeatureScore& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.feature < b.feature;
    });
    return out;
}

std::pair<GbtModel, TrainingHistory> train_gbt(const corpus::Dataset& train,
                                               const corpus::Dataset& val,
                                               const GbtParams& params,
                                               const SimilarityProbe& probe) {
    params.validate();
    if (!(train.vocabulary == val.vocabulary))
        throw SchemaError("train and validation vocabularies differ");

    const Encoded tr = encode(train);
    const Encoded va = encode(val);
    const std::size_t n = tr.rows.size();
    double positives = 0;
    for (int y : tr.labels) positives += y;
    if (n == 0 || positives == 0 || positives == static_cast<double>(n))
        throw DegenerateDataset("training split must contain both classes");

    GbtModel model;
    model.vocabulary = train.vocabulary;
    model.base_logit = metrics::logit(positives / static_cast<double>(n));
    model.shrinkage = params.shrinkage;

    std::vector<double> margin_tr(n, model.base_logit);
    std::vector<double> margin_va(va.rows.size(), model.base_logit);
    std::vector<double> g(n), h(n);

    TrainingHistory history;
    double best_auc = -1.0;
    std::size_t best_tree_count = 0;
    int checkpoint = 0;

    for (int round = 1; round <= params.rounds; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            const double p = metrics::sigmoid(margin_tr[i]);
            g[i] = p - tr.labels[i];
            h[i] = p * (1.0 - p);
        }
        DecisionTree tree = TreeBuilder(tr, g, h, params).build();
        for (std::size_t i = 0; i < n; ++i)
            margin_tr[i] += params.shrinkage * tree.value(tr.rows[i]);
        for (std::size_t i = 0; i < va.rows.size(); ++i)
            margin_va[i] += params.shrinkage * tree.value(va.rows[i]);
        model.trees.push_back(std::move(tree));

        if (round % params.checkpoint_interval == 0 || round == params.rounds) {
            EpochStat stat;
            stat.epoch = ++checkpoint;
            stat.val_auc = metrics::auc(va.labels, margin_va);
            std::vector<double> probs(n);
            for (std::size_t i = 0; i < n; ++i) probs[i] = metrics::sigmoid(margin_tr[i]);
            stat.train_loss = metrics::mean_log_loss(tr.labels, probs);
            if (probe) stat.val_similarity = probe(model);
            if (stat.val_auc > best_auc) {
                best_auc = stat.val_auc;
                best_tree_count = model.trees.size();
            }
            history.entries.push_back(stat);
        }
    }

    model.trees.resize(best_tree_count);
    return {std::move(model), std::move(history)};
}

void save_gbt(const GbtModel& model, const std::filesystem::path& path) {
    json vocab = json::array();
    for (const auto& e : model.vocabulary.entries())
        vocab.push_back({{"name", e.name},
                         {"category", std::string(1, corpus::category_letter(e.category))}});
    json trees = json::array();
    for (const auto& t : model.trees) trees.push_back(tree_to_json(t, 0));
    json doc = {{"version", 1},
                {"kind", "gbt"},
                {"base_logit", model.base_logit},
                {"shrinkage", model.shrinkage},
                {"vocab", std::move(vocab)},
                {"trees", std::move(trees)}};
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out << doc.dump() << '\n';
}

GbtModel load_gbt(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open for reading: " + path.string());
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ParseError("malformed model file", 1);
    if (!doc.contains("kind") || doc["kind"] != "gbt" || doc["version"] != 1)
        throw SchemaError("not a version-1 boosted-tree model file");

    GbtModel model;
    std::vector<std::pair<std::string, corpus::TokenCategory>> spec;
    for (const auto& e : doc.at("vocab"))
        spec.emplace_back(e.at("name").get<std::string>(),
                          corpus::category_from_letter(e.at("category").get<std::string>().at(0)));
    model.vocabulary = corpus::build_vocabulary(spec);
    model.base_logit = doc.at("base_logit").get<double>();
    model.shrinkage = doc.at("shrinkage").get<double>();
    for (const auto& t : doc.at("trees")) {
        DecisionTree tree;
        tree_from_json(t, tree);
        model.trees.push_back(std::move(tree));
    }
    return model;
}

}  // namespace xpb::gbt
