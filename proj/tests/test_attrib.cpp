#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "xpb/attrib.hpp"
#include "xpb/metrics.hpp"
#include "xpb/rng.hpp"

using namespace xpb;
using namespace xpb::corpus;
using namespace xpb::attrib;

namespace {

Vocabulary abc_vocab() {
    return build_vocabulary({{"a", TokenCategory::Adverse},
                             {"b", TokenCategory::Helper},
                             {"c", TokenCategory::Noise}});
}

Vocabulary wide_vocab() {
    return build_vocabulary({{"a", TokenCategory::Adverse},
                             {"b", TokenCategory::Adverse},
                             {"c", TokenCategory::Helper},
                             {"d", TokenCategory::Unhelper},
                             {"e", TokenCategory::Noise},
                             {"f", TokenCategory::Noise}});
}

/// v(S) = sum of w_j * (x_j if present else b_j); Shapley is w_j (x_j - b_j).
struct LinearGame {
    std::vector<double> w, x, b;

    double operator()(const std::vector<std::uint8_t>& mask) const {
        double s = 0.0;
        for (std::size_t j = 0; j < w.size(); ++j) s += w[j] * (mask[j] ? x[j] : b[j]);
        return s;
    }
};

/// Arbitrary deterministic game: one fixed value per coalition.
struct TableGame {
    std::vector<double> values;

    double operator()(const std::vector<std::uint8_t>& mask) const {
        std::uint64_t m = 0;
        for (std::size_t j = 0; j < mask.size(); ++j)
            if (mask[j]) m |= std::uint64_t{1} << j;
        return values[m];
    }
};

TableGame random_game(std::size_t units, std::uint64_t seed) {
    Rng rng(seed);
    TableGame g;
    g.values.resize(std::size_t{1} << units);
    for (double& v : g.values) v = rng.uniform();
    return g;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

gbt::GbtModel stump_model() {
    gbt::GbtModel m;
    m.vocabulary = abc_vocab();
    m.base_logit = 0.0;
    m.shrinkage = 1.0;
    gbt::DecisionTree t;
    t.nodes.resize(3);
    t.nodes[0] = {0, 0.5, 1, 2, 1.0, 0.0};
    t.nodes[1] = {-1, 0.0, -1, -1, 0.0, -1.0};
    t.nodes[2] = {-1, 0.0, -1, -1, 0.0, 1.0};
    m.trees.push_back(t);
    return m;
}

recurrent::RecurrentModel small_lstm(recurrent::AttentionMode mode, std::uint64_t seed) {
    recurrent::RecurrentConfig cfg;
    cfg.embedding_dim = 3;
    cfg.hidden_dim = 4;
    cfg.attention = mode;
    cfg.seed = seed;
    return recurrent::init_model(cfg, wide_vocab());
}

EventSequence sample_record(std::int64_t id) {
    EventSequence r;
    r.id = id;
    r.label = 1;
    r.events = {{"a", 9}, {"c", 7}, {"e", 4}, {"b", 1}};
    return r;
}

}  // namespace

TEST_CASE("kernel shap recovers the closed form on a linear game") {
    LinearGame g{{0.5, -1.0, 2.0, 0.0, 1.5}, {1, 2, 3, 4, 5}, {0, 1, 0, 2, 1}};
    const auto attr = kernel_shap(std::cref(g), 5, {});
    REQUIRE(attr.scores.size() == 5);
    for (std::size_t j = 0; j < 5; ++j)
        CHECK(attr.scores[j] == doctest::Approx(g.w[j] * (g.x[j] - g.b[j])).epsilon(1e-9));
    const double v0 = g(std::vector<std::uint8_t>(5, 0));
    const double vfull = g(std::vector<std::uint8_t>(5, 1));
    CHECK(attr.baseline == doctest::Approx(v0).epsilon(1e-12));
    double sum = attr.baseline;
    for (double s : attr.scores) sum += s;
    CHECK(sum == doctest::Approx(vfull).epsilon(1e-12));
    CHECK(attr.method == Method::KernelShap);
}

TEST_CASE("constant game attributes nothing") {
    const auto attr = kernel_shap([](const std::vector<std::uint8_t>&) { return 0.37; }, 4, {});
    for (double s : attr.scores) CHECK(std::abs(s) < 1e-12);
    CHECK(attr.baseline == doctest::Approx(0.37));
}

TEST_CASE("two-unit AND game splits evenly") {
    const auto v = [](const std::vector<std::uint8_t>& m) {
        return m[0] && m[1] ? 1.0 : 0.0;
    };
    const auto attr = kernel_shap(v, 2, {});
    CHECK(attr.scores[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(attr.scores[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(attr.baseline == doctest::Approx(0.0));
}

TEST_CASE("single unit takes the whole output change") {
    const auto v = [](const std::vector<std::uint8_t>& m) { return m[0] ? 0.9 : 0.2; };
    const auto attr = kernel_shap(v, 1, {});
    CHECK(attr.scores[0] == doctest::Approx(0.7));
    const auto ex = exact_shapley(v, 1);
    CHECK(ex.scores[0] == doctest::Approx(0.7));
}

TEST_CASE("kernel enumeration agrees with the factorial oracle") {
    const auto g = random_game(8, 11);
    const auto kernel = kernel_shap(std::cref(g), 8, {});
    const auto oracle = exact_shapley(std::cref(g), 8);
    CHECK(max_abs_diff(kernel.scores, oracle.scores) < 1e-8);
    CHECK(kernel.baseline == doctest::Approx(oracle.baseline).epsilon(1e-12));
}

TEST_CASE("exact shapley satisfies symmetry, null player, efficiency") {
    // Value depends only on coalition size: every unit is interchangeable.
    const auto symmetric = [](const std::vector<std::uint8_t>& m) {
        int s = 0;
        for (auto z : m) s += z;
        return static_cast<double>(s) * static_cast<double>(s);
    };
    const auto sym = exact_shapley(symmetric, 5);
    for (double s : sym.scores) CHECK(s == doctest::Approx(sym.scores[0]).epsilon(1e-12));

    // Unit 2 never changes the value.
    const auto nullgame = [](const std::vector<std::uint8_t>& m) {
        return 0.3 * m[0] + 0.9 * m[1] * m[3] - 0.2 * m[4];
    };
    const auto got = exact_shapley(nullgame, 5);
    CHECK(std::abs(got.scores[2]) < 1e-12);
    double sum = got.baseline;
    for (double s : got.scores) sum += s;
    CHECK(sum == doctest::Approx(nullgame(std::vector<std::uint8_t>(5, 1))).epsilon(1e-12));
}

TEST_CASE("attribution input validation") {
    const auto v = [](const std::vector<std::uint8_t>&) { return 0.0; };
    CHECK_THROWS_AS(kernel_shap(v, 0, {}), DegenerateInstance);
    CHECK_THROWS_AS(exact_shapley(v, 0), DegenerateInstance);
    CHECK_THROWS_AS(exact_shapley(v, 17), TooManyUnits);
    CHECK_THROWS_AS(kernel_shap(v, 64, {}), TooManyUnits);

    ShapConfig tight;
    tight.strategy = ShapConfig::Strategy::ForceSampled;
    tight.coalition_samples = 20;  // below 2*10 + 4
    CHECK_THROWS_AS(kernel_shap(v, 10, tight), ConfigError);
}

TEST_CASE("sampled path stays exact on linear games") {
    // Linear games make every coalition row consistent, so any full-rank
    // sample solves to the closed form; this isolates the solver from the
    // sampling noise.
    LinearGame g{{1.0, -0.5, 0.25, 2.0, -1.5, 0.75, 0.1, -0.9, 1.3, 0.6,
                  -0.4, 0.2, 0.8, -1.1, 0.05, 1.9},
                 {1, 0, 2, 1, 3, 1, 0, 2, 1, 1, 2, 0, 1, 2, 3, 1},
                 {0, 1, 1, 0, 1, 0, 1, 0, 0, 1, 0, 1, 0, 1, 1, 0}};
    ShapConfig cfg;
    cfg.seed = 21;
    const auto attr = kernel_shap(std::cref(g), 16, cfg);  // auto-samples above 13
    for (std::size_t j = 0; j < 16; ++j)
        CHECK(attr.scores[j] == doctest::Approx(g.w[j] * (g.x[j] - g.b[j])).epsilon(1e-8));
}

TEST_CASE("sampling error shrinks toward the oracle as the budget grows") {
    const auto g = random_game(10, 29);
    const auto oracle = exact_shapley(std::cref(g), 10);
    const auto sampled_error = [&](int budget) {
        ShapConfig cfg;
        cfg.strategy = ShapConfig::Strategy::ForceSampled;
        cfg.coalition_samples = budget;
        cfg.seed = 5;
        return max_abs_diff(kernel_shap(std::cref(g), 10, cfg).scores, oracle.scores);
    };
    const double e64 = sampled_error(64);
    const double e1024 = sampled_error(1024);
    const double e4096 = sampled_error(4096);
    CHECK(e4096 < 1e-8);  // the budget covers every size pair: full enumeration
    CHECK(e1024 < 0.01);
    CHECK(e1024 <= e64 + 1e-9);
    CHECK(e64 < 0.5);
}

TEST_CASE("sampled attributions are seed-deterministic") {
    const auto g = random_game(10, 3);
    ShapConfig cfg;
    cfg.strategy = ShapConfig::Strategy::ForceSampled;
    cfg.coalition_samples = 64;
    cfg.seed = 123;
    const auto first = kernel_shap(std::cref(g), 10, cfg);
    const auto second = kernel_shap(std::cref(g), 10, cfg);
    CHECK(first.scores == second.scores);
    cfg.seed = 124;
    const auto other = kernel_shap(std::cref(g), 10, cfg);
    CHECK(max_abs_diff(first.scores, other.scores) > 0.0);
}

TEST_CASE("background sampling is seeded and bounded") {
    Dataset ds;
    ds.vocabulary = abc_vocab();
    for (int i = 0; i < 10; ++i) {
        EventSequence r;
        r.id = i;
        r.label = i % 2;
        r.events = {{"a", i % 3}, {"b", 0}};
        ds.records.push_back(r);
    }
    const auto bg = sample_background(ds, 4, 7);
    CHECK(bg.size() == 4);
    for (const auto& row : bg.counts) CHECK(row.size() == 3);
    const auto again = sample_background(ds, 4, 7);
    CHECK(bg.counts == again.counts);

    CHECK(sample_background(ds, 50, 7).size() == 10);  // clamped to the split
    CHECK_THROWS_AS(sample_background(Dataset{abc_vocab(), {}, SplitTag::Train}, 4, 7),
                    DegenerateDataset);
    CHECK_THROWS_AS(sample_background(ds, 0, 7), DegenerateDataset);
}

TEST_CASE("count-space adapter: efficiency, null features, determinism") {
    const auto model = stump_model();
    EventSequence rec;
    rec.id = 42;
    rec.label = 1;
    rec.events = {{"a", 5}, {"a", 2}, {"b", 1}};

    BackgroundSet bg;
    bg.counts = {{0, 0, 0}, {2, 1, 0}};

    const auto attr = shap_for_gbt(model, rec, bg, {});
    CHECK(attr.space == UnitSpace::CountSpace);
    CHECK(attr.target == 42);
    REQUIRE(attr.scores.size() == 3);

    // Baseline averages the two background predictions, sigmoid(-1)/sigmoid(1).
    const double expect_base = (metrics::sigmoid(-1.0) + metrics::sigmoid(1.0)) / 2.0;
    CHECK(attr.baseline == doctest::Approx(expect_base).epsilon(1e-12));

    double sum = attr.baseline;
    for (double s : attr.scores) sum += s;
    CHECK(sum == doctest::Approx(predict_gbt(model, encode_counts(rec, model.vocabulary)))
                     .epsilon(1e-10));

    // The stump reads only feature 0; "b" and "c" are null players. "c" is
    // additionally a no-op mask: absent in the record and in every background.
    CHECK(std::abs(attr.scores[1]) < 1e-12);
    CHECK(std::abs(attr.scores[2]) < 1e-12);

    const auto exact = exact_shapley_for_gbt(model, rec, bg);
    CHECK(max_abs_diff(attr.scores, exact.scores) < 1e-8);

    const auto again = shap_for_gbt(model, rec, bg, {});
    CHECK(attr.scores == again.scores);
}

TEST_CASE("sequence-space adapter masks to padding and stays efficient") {
    const auto model = small_lstm(recurrent::AttentionMode::DotProduct, 31);
    const auto rec = sample_record(7);
    const auto attr = shap_for_lstm(model, rec, {});
    CHECK(attr.space == UnitSpace::SequenceSpace);
    CHECK(attr.target == 7);
    REQUIRE(attr.scores.size() == rec.events.size());

    // Empty coalition masks everything to padding: output-bias probability.
    CHECK(attr.baseline == doctest::Approx(0.5).epsilon(1e-12));

    const auto seq = encode_indices(rec, model.vocabulary);
    double sum = attr.baseline;
    for (double s : attr.scores) sum += s;
    CHECK(sum == doctest::Approx(recurrent::forward(model, seq).probability).epsilon(1e-10));

    const auto exact = exact_shapley_for_lstm(model, rec);
    CHECK(max_abs_diff(attr.scores, exact.scores) < 1e-8);
}

TEST_CASE("attention extraction matches the forward trace exactly") {
    const auto rec = sample_record(9);
    for (auto mode : {recurrent::AttentionMode::DotProduct,
                      recurrent::AttentionMode::SelfAttention}) {
        const auto model = small_lstm(mode, 17);
        const auto attr = attention_attribution(model, rec);
        const auto trace = recurrent::forward(model, encode_indices(rec, model.vocabulary));
        CHECK(attr.scores == trace.alpha);
        CHECK(attr.space == UnitSpace::SequenceSpace);
        CHECK(attr.method == (mode == recurrent::AttentionMode::DotProduct
                                  ? Method::DotAttention
                                  : Method::SelfAttention));
        double sum = 0.0;
        for (double s : attr.scores) sum += s;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }

    EventSequence one;
    one.id = 1;
    one.label = 0;
    one.events = {{"a", 0}};
    const auto attr = attention_attribution(small_lstm(recurrent::AttentionMode::DotProduct, 17), one);
    REQUIRE(attr.scores.size() == 1);
    CHECK(attr.scores[0] == doctest::Approx(1.0));

    CHECK_THROWS_AS(attention_attribution(small_lstm(recurrent::AttentionMode::None, 17), one),
                    NoAttention);
}

TEST_CASE("epsilon share follows the closed form") {
    // Surrogate of a single linear layer with weights (2, -1) on inputs (1, 1).
    const auto tiny = epsilon_share({2.0, -1.0}, 1.0, 1e-6);
    CHECK(tiny[0] == doctest::Approx(2.0).epsilon(1e-5));
    CHECK(tiny[1] == doctest::Approx(-1.0).epsilon(1e-5));

    const auto neg = epsilon_share({-2.0, 1.0}, 1.0, 0.1);
    CHECK(neg[0] == doctest::Approx(-2.0 / -1.1));
    CHECK(neg[1] == doctest::Approx(1.0 / -1.1));

    // Zero-sum contributions: the stabilizer keeps its positive sign.
    const auto zero = epsilon_share({1.0, -1.0}, 0.5, 0.5);
    CHECK(zero[0] == doctest::Approx(1.0));
    CHECK(zero[1] == doctest::Approx(-1.0));
}

TEST_CASE("relevance propagation conserves the logit within the audit bound") {
    const auto rec = sample_record(3);
    for (auto mode : {recurrent::AttentionMode::None,
                      recurrent::AttentionMode::DotProduct,
                      recurrent::AttentionMode::SelfAttention}) {
        CAPTURE(static_cast<int>(mode));
        const auto model = small_lstm(mode, 53);
        const double eps = 1e-4;
        const auto attr = lrp_lstm(model, rec, eps);
        const auto trace = recurrent::forward(model, encode_indices(rec, model.vocabulary));
        double sum = 0.0;
        for (double s : attr.scores) sum += s;
        CHECK(std::abs(sum - trace.logit) <= 0.05 * std::abs(trace.logit) + 10.0 * eps);
        // The conservative mass reassignment makes the identity float-exact.
        CHECK(std::abs(sum - trace.logit) <= 1e-9 * std::max(1.0, std::abs(trace.logit)));
        CHECK(attr.method == Method::Lrp);
        CHECK(attr.target == 3);
    }
}

TEST_CASE("relevance is invariant under padding insertion") {
    const auto model = small_lstm(recurrent::AttentionMode::DotProduct, 77);
    IndexSequence clean;
    clean.indices = {1, 3, 5, 2};
    clean.gaps = {9, 7, 4, 1};
    IndexSequence padded;
    padded.indices = {0, 1, 3, 0, 5, 2, 0};
    padded.gaps = {0, 9, 7, 0, 4, 1, 0};

    const auto a = lrp_lstm(model, clean, 1e-3);
    const auto b = lrp_lstm(model, padded, 1e-3);
    REQUIRE(b.scores.size() == 7);
    CHECK(b.scores[0] == 0.0);
    CHECK(b.scores[3] == 0.0);
    CHECK(b.scores[6] == 0.0);
    CHECK(b.scores[1] == a.scores[0]);
    CHECK(b.scores[2] == a.scores[1]);
    CHECK(b.scores[4] == a.scores[2]);
    CHECK(b.scores[5] == a.scores[3]);
}

TEST_CASE("zeroed embeddings carry zero relevance") {
    auto model = small_lstm(recurrent::AttentionMode::DotProduct, 19);
    std::fill(model.params.begin(), model.params.begin() + model.off_lstm_w(), 0.0);
    const auto attr = lrp_lstm(model, sample_record(4), 1e-3);
    for (double s : attr.scores) CHECK(s == 0.0);
}

TEST_CASE("relevance propagation input validation") {
    const auto model = small_lstm(recurrent::AttentionMode::DotProduct, 23);
    CHECK_THROWS_AS(lrp_lstm(model, sample_record(1), 0.0), ConfigError);
    CHECK_THROWS_AS(lrp_lstm(model, IndexSequence{}), EmptySequence);
    auto broken = model;
    broken.params.pop_back();
    CHECK_THROWS_AS(lrp_lstm(broken, sample_record(1)), ModelError);
}
