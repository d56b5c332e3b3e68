// Microbenchmarks for the hot paths: generation, model forward passes, and
// the attribution methods. Sizes mirror the shipped study configuration.
#include <benchmark/benchmark.h>

#include <vector>

#include "xpb/attrib.hpp"
#include "xpb/corpus.hpp"
#include "xpb/gbt.hpp"
#include "xpb/recurrent.hpp"
#include "xpb/rng.hpp"
#include "xpb/synthgen.hpp"

using namespace xpb;

namespace {

synthgen::SplitBundle small_bundle(synthgen::GenMode mode) {
    synthgen::GenConfig config = synthgen::standard_config(mode, 99);
    config.counts = {600, 200, 200};
    return synthgen::generate_dataset(config);
}

const synthgen::SplitBundle& bundle() {
    static const synthgen::SplitBundle b = small_bundle(synthgen::GenMode::SequenceDriven);
    return b;
}

gbt::GbtModel trained_gbt() {
    gbt::GbtParams params;
    params.rounds = 40;
    auto [model, history] = gbt::train_gbt(bundle().train, bundle().validation, params);
    return model;
}

recurrent::RecurrentModel trained_lstm(recurrent::AttentionMode mode) {
    recurrent::RecurrentConfig config = recurrent::right_sized_config(mode, 12);
    config.epochs = 2;
    auto [model, history] = recurrent::fit(
        recurrent::init_model(config, bundle().train.vocabulary), bundle().train,
        bundle().validation, config);
    return model;
}

void bm_generate_dataset(benchmark::State& state) {
    synthgen::GenConfig config =
        synthgen::standard_config(synthgen::GenMode::SequenceDriven, 123);
    config.counts = {static_cast<std::size_t>(state.range(0)),
                     static_cast<std::size_t>(state.range(0) / 3),
                     static_cast<std::size_t>(state.range(0) / 3)};
    for (auto _ : state) {
        benchmark::DoNotOptimize(synthgen::generate_dataset(config));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_generate_dataset)->Arg(600)->Arg(3000)->Unit(benchmark::kMillisecond);

void bm_gbt_predict(benchmark::State& state) {
    static const gbt::GbtModel model = trained_gbt();
    const corpus::Dataset& test = bundle().test;
    std::vector<corpus::CountVector> rows;
    for (const auto& r : test.records) rows.push_back(corpus::encode_counts(r, test.vocabulary));
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(gbt::predict_gbt(model, rows[i]));
        i = (i + 1) % rows.size();
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(bm_gbt_predict);

void bm_lstm_forward(benchmark::State& state) {
    static const recurrent::RecurrentModel model =
        trained_lstm(recurrent::AttentionMode::DotProduct);
    const corpus::Dataset& test = bundle().test;
    std::vector<corpus::IndexSequence> rows;
    for (const auto& r : test.records) rows.push_back(corpus::encode_indices(r, test.vocabulary));
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(recurrent::forward(model, rows[i]));
        i = (i + 1) % rows.size();
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(bm_lstm_forward);

void bm_kernel_shap_gbt(benchmark::State& state) {
    static const gbt::GbtModel model = trained_gbt();
    const corpus::Dataset& test = bundle().test;
    const attrib::BackgroundSet background = attrib::sample_background(bundle().train, 32, 5);
    attrib::ShapConfig config;
    config.coalition_samples = static_cast<int>(state.range(0));
    config.strategy = attrib::ShapConfig::Strategy::ForceSampled;
    config.seed = 17;
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            attrib::shap_for_gbt(model, test.records[0], background, config));
    }
}
BENCHMARK(bm_kernel_shap_gbt)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);

void bm_kernel_shap_lstm(benchmark::State& state) {
    static const recurrent::RecurrentModel model =
        trained_lstm(recurrent::AttentionMode::DotProduct);
    attrib::ShapConfig config;
    config.coalition_samples = static_cast<int>(state.range(0));
    config.seed = 17;
    for (auto _ : state) {
        benchmark::DoNotOptimize(attrib::shap_for_lstm(model, bundle().test.records[0], config));
    }
}
BENCHMARK(bm_kernel_shap_lstm)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);

void bm_lrp_lstm(benchmark::State& state) {
    static const recurrent::RecurrentModel model =
        trained_lstm(recurrent::AttentionMode::DotProduct);
    for (auto _ : state) {
        benchmark::DoNotOptimize(attrib::lrp_lstm(model, bundle().test.records[0], 1e-3));
    }
}
BENCHMARK(bm_lrp_lstm);

void bm_exact_shapley(benchmark::State& state) {
    const std::size_t units = static_cast<std::size_t>(state.range(0));
    Rng rng(3);
    std::vector<double> table(std::size_t{1} << units);
    for (auto& v : table) v = rng.uniform();
    const attrib::CoalitionValue game = [&](const std::vector<std::uint8_t>& mask) {
        std::size_t bits = 0;
        for (std::size_t j = 0; j < units; ++j)
            if (mask[j]) bits |= std::size_t{1} << j;
        return table[bits];
    };
    for (auto _ : state) {
        benchmark::DoNotOptimize(attrib::exact_shapley(game, units));
    }
}
BENCHMARK(bm_exact_shapley)->Arg(8)->Arg(12)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
