#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "xpb/gbt.hpp"
#include "xpb/metrics.hpp"
#include "xpb/rng.hpp"

using namespace xpb;
using namespace xpb::corpus;
using namespace xpb::gbt;

namespace {

Vocabulary abc_vocab() {
    return build_vocabulary({{"a", TokenCategory::Adverse},
                             {"b", TokenCategory::Helper},
                             {"c", TokenCategory::Noise}});
}

GbtModel stump_model(int feature, double lo, double hi) {
    GbtModel m;
    m.vocabulary = abc_vocab();
    m.base_logit = 0.0;
    m.shrinkage = 1.0;
    DecisionTree t;
    t.nodes.resize(3);
    t.nodes[0] = {feature, 0.5, 1, 2, 1.0, 0.0};
    t.nodes[1] = {-1, 0.0, -1, -1, 0.0, lo};
    t.nodes[2] = {-1, 0.0, -1, -1, 0.0, hi};
    m.trees.push_back(t);
    return m;
}

/// Records with `count` copies of "a" padded by one "c".
EventSequence counted_record(std::int64_t id, int count, int label) {
    EventSequence r;
    r.id = id;
    r.label = label;
    for (int i = 0; i < count; ++i) r.events.push_back({"a", 0});
    r.events.push_back({"c", 0});
    return r;
}

/// Separable toy problem: label 1 iff the record holds two "a" events.
Dataset separable(std::size_t n, std::int64_t id0) {
    Dataset ds;
    ds.vocabulary = abc_vocab();
    for (std::size_t i = 0; i < n; ++i) {
        const int label = i % 2 == 0 ? 1 : 0;
        ds.records.push_back(counted_record(id0 + static_cast<std::int64_t>(i),
                                            label == 1 ? 2 : 1, label));
    }
    return ds;
}

/// Noisy three-feature problem with signal on "a" and "b".
Dataset noisy(std::size_t n, std::uint64_t seed, std::int64_t id0) {
    Dataset ds;
    ds.vocabulary = abc_vocab();
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        EventSequence r;
        r.id = id0 + static_cast<std::int64_t>(i);
        const int na = rng.uniform_int(0, 3), nb = rng.uniform_int(0, 3);
        for (int k = 0; k < na; ++k) r.events.push_back({"a", 0});
        for (int k = 0; k < nb; ++k) r.events.push_back({"b", 0});
        r.events.push_back({"c", 0});
        const double p = metrics::sigmoid(1.2 * na - 1.0 * nb - 0.3);
        r.label = rng.bernoulli(p) ? 1 : 0;
        ds.records.push_back(std::move(r));
    }
    return ds;
}

std::vector<double> predictions(const GbtModel& m, const Dataset& ds) {
    std::vector<double> out;
    for (const auto& r : ds.records) out.push_back(predict_gbt(m, encode_counts(r, ds.vocabulary)));
    return out;
}

}  // namespace

TEST_CASE("a hand-built stump routes on the count threshold") {
    GbtModel m = stump_model(0, -1.0, 1.0);
    CountVector two{{2, 0, 0}};
    CHECK(predict_gbt(m, two) == doctest::Approx(metrics::sigmoid(1.0)));
    CHECK(predict_gbt(m, two) == doctest::Approx(0.7311).epsilon(1e-4));
    CountVector zero{{0, 5, 1}};
    CHECK(predict_gbt(m, zero) == doctest::Approx(metrics::sigmoid(-1.0)));
}

TEST_CASE("zero-weight trees are the additive identity") {
    GbtModel m = stump_model(0, 0.0, 0.0);
    CHECK(predict_gbt(m, CountVector{{3, 0, 0}}) == doctest::Approx(0.5));

    GbtModel signal = stump_model(1, -0.7, 0.4);
    const double before = predict_gbt(signal, CountVector{{0, 2, 0}});
    signal.trees.push_back(stump_model(0, 0.0, 0.0).trees[0]);
    CHECK(predict_gbt(signal, CountVector{{0, 2, 0}}) == doctest::Approx(before));
}

TEST_CASE("prediction rejects mismatched feature width") {
    GbtModel m = stump_model(0, -1.0, 1.0);
    CHECK_THROWS_AS(predict_gbt(m, CountVector{{1, 2}}), DimensionError);
}

TEST_CASE("an empty ensemble predicts the base rate") {
    Dataset tr = separable(40, 0);
    Dataset va = separable(10, 1000);
    GbtParams params;
    params.rounds = 0;
    auto [model, history] = train_gbt(tr, va, params);
    CHECK(model.trees.empty());
    CHECK(history.entries.empty());
    CHECK(predict_gbt(model, CountVector{{1, 0, 0}}) == doctest::Approx(0.5));
}

TEST_CASE("boosting separates a separable toy problem") {
    Dataset tr = separable(40, 0);
    Dataset va = separable(10, 1000);
    GbtParams params;
    params.rounds = 10;
    params.max_depth = 1;
    params.checkpoint_interval = 5;
    auto [model, history] = train_gbt(tr, va, params);

    std::vector<int> labels;
    for (const auto& r : tr.records) labels.push_back(r.label);
    CHECK(metrics::auc(labels, predictions(model, tr)) == doctest::Approx(1.0));
    CHECK(history.entries.size() == 2);
    CHECK(history.entries[0].epoch == 1);
    CHECK(history.entries[1].epoch == 2);
}

TEST_CASE("training is deterministic") {
    Dataset tr = noisy(300, 5, 0);
    Dataset va = noisy(100, 6, 1000);
    GbtParams params;
    params.rounds = 25;
    params.checkpoint_interval = 10;
    auto [m1, h1] = train_gbt(tr, va, params);
    auto [m2, h2] = train_gbt(tr, va, params);
    CHECK(m1.trees.size() == m2.trees.size());
    CHECK(predictions(m1, va) == predictions(m2, va));
    REQUIRE(h1.entries.size() == h2.entries.size());
    for (std::size_t i = 0; i < h1.entries.size(); ++i)
        CHECK(h1.entries[i].val_auc == h2.entries[i].val_auc);
}

TEST_CASE("checkpoints track validation AUC and call the similarity probe") {
    Dataset tr = noisy(300, 7, 0);
    Dataset va = noisy(100, 8, 1000);
    GbtParams params;
    params.rounds = 35;
    params.checkpoint_interval = 10;
    int calls = 0;
    auto [model, history] =
        train_gbt(tr, va, params, [&](const GbtModel& m) {
            ++calls;
            return static_cast<double>(m.trees.size());
        });
    CHECK(history.entries.size() == 4);  // rounds 10, 20, 30, 35
    CHECK(calls == 4);
    for (const auto& e : history.entries) {
        CHECK(std::isfinite(e.train_loss));
        CHECK(e.val_auc > 0.0);
        REQUIRE(e.val_similarity.has_value());
    }
    CHECK(history.best_similarity_epoch() == 4);
    // The returned ensemble is one of the checkpointed prefixes.
    const std::size_t n = model.trees.size();
    CHECK((n == 10 || n == 20 || n == 30 || n == 35));
}

TEST_CASE("predictions are invariant under a consistent feature permutation") {
    Dataset tr = noisy(200, 9, 0);
    Dataset va = noisy(80, 10, 1000);
    GbtParams params;
    params.rounds = 15;
    auto [model, history] = train_gbt(tr, va, params);

    // Rotate features: entry i becomes entry (i+1) % 3.
    GbtModel rotated = model;
    rotated.vocabulary = build_vocabulary({{"c", TokenCategory::Noise},
                                           {"a", TokenCategory::Adverse},
                                           {"b", TokenCategory::Helper}});
    const int perm[3] = {1, 2, 0};
    for (auto& t : rotated.trees)
        for (auto& node : t.nodes)
            if (node.feature >= 0) node.feature = perm[node.feature];

    CountVector x{{2, 1, 3}};
    CountVector rx{{3, 2, 1}};
    CHECK(predict_gbt(rotated, rx) == doctest::Approx(predict_gbt(model, x)).epsilon(1e-15));
}

TEST_CASE("importance puts all mass on the only split feature") {
    GbtModel empty;
    empty.vocabulary = abc_vocab();
    auto scores = information_gain_importance(empty);
    REQUIRE(scores.size() == 3);
    for (const auto& s : scores) CHECK(s.score == 0.0);

    GbtModel stump = stump_model(1, -1.0, 1.0);
    scores = information_gain_importance(stump);
    CHECK(scores[0].feature == 1);
    CHECK(scores[0].score == doctest::Approx(1.0));
    CHECK(scores[1].score == 0.0);
    CHECK(scores[2].score == 0.0);
}

TEST_CASE("trained importance concentrates on informative features") {
    Dataset tr = noisy(400, 11, 0);
    Dataset va = noisy(100, 12, 1000);
    GbtParams params;
    params.rounds = 30;
    auto [model, history] = train_gbt(tr, va, params);
    auto scores = information_gain_importance(model);
    // "c" (feature 2) carries no signal and must rank last.
    CHECK(scores[2].feature == 2);
}

TEST_CASE("degenerate training inputs are rejected") {
    Dataset tr = separable(40, 0);
    for (auto& r : tr.records) r.label = 1;
    Dataset va = separable(10, 1000);
    GbtParams params;
    CHECK_THROWS_AS(train_gbt(tr, va, params), DegenerateDataset);

    Dataset other = separable(40, 0);
    Dataset bad_vocab;
    bad_vocab.vocabulary = build_vocabulary({{"z", TokenCategory::Noise}});
    bad_vocab.records = {{1, {{"z", 0}}, 1, std::nullopt, {}}, {2, {{"z", 0}}, 0, std::nullopt, {}}};
    CHECK_THROWS_AS(train_gbt(other, bad_vocab, params), SchemaError);

    GbtParams bad;
    bad.shrinkage = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("model files round-trip") {
    Dataset tr = noisy(200, 13, 0);
    Dataset va = noisy(80, 14, 1000);
    GbtParams params;
    params.rounds = 12;
    auto [model, history] = train_gbt(tr, va, params);

    const auto path = std::filesystem::temp_directory_path() / "xpb_gbt_model.json";
    save_gbt(model, path);
    GbtModel back = load_gbt(path);
    CHECK(back.vocabulary == model.vocabulary);
    CHECK(back.base_logit == model.base_logit);
    CHECK(back.trees.size() == model.trees.size());
    CHECK(predictions(back, va) == predictions(model, va));

    const auto path2 = std::filesystem::temp_directory_path() / "xpb_gbt_model2.json";
    save_gbt(back, path2);
    std::ifstream a(path), b(path2);
    std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}
