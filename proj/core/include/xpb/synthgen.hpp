#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "xpb/corpus.hpp"
#include "xpb/rng.hpp"

namespace xpb::synthgen {

enum class GenMode { EventDriven, SequenceDriven };

/// A label-generating token combination, e.g. two adverse plus one helper.
struct Pathway {
    std::string id;
    int adverse = 0;
    int helper = 0;
    int unhelper = 0;
    double base_probability = 0.0;

    int token_count() const { return adverse + helper + unhelper; }
};

/// The seven combinations and their base probabilities.
std::vector<Pathway> standard_pathways();

/// Exponential decay rates for the sequence-driven probability. The defaults
/// are tuned so per-pathway mean probabilities stay near the base values
/// under the gap scheme below; the ordering constraint is 0 < a < h < u < 1.
struct DecayParams {
    double a = 0.14;
    double h = 0.155;
    double u = 0.65;
    double floor = 0.1;
    double ceiling = 1.0;

    void validate() const;  // throws ConfigError
};

struct SplitCounts {
    std::size_t train = 21000;
    std::size_t validation = 7000;
    std::size_t test = 7000;
};

struct GenConfig {
    GenMode mode = GenMode::SequenceDriven;
    corpus::Vocabulary vocabulary;
    std::vector<Pathway> pathways;
    DecayParams decay;
    SplitCounts counts;
    int max_length = corpus::kMaxRecordLength;
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError
};

/// 10 adverse + 10 helper + 10 unhelper + 15 noise tokens.
corpus::Vocabulary synthetic_vocabulary();

GenConfig standard_config(GenMode mode, std::uint64_t seed);

const Pathway& find_pathway(const std::vector<Pathway>& configured, std::string_view id);

/// Base probability of the configured pathway `id`; throws UnknownPathway.
double event_probability(const std::vector<Pathway>& configured, std::string_view id);

/// clamp(sum_A e^{-a*gap} + sum_H e^{-h*gap} - sum_U e^{-u*gap}) with noise
/// events contributing nothing.
double sequence_probability(const corpus::EventSequence& events,
                            const corpus::Vocabulary& vocab, const DecayParams& decay);

/// One record from one pathway: concrete driver tokens drawn per category
/// without replacement, noise fill, uniform gaps in [0, L-1], Bernoulli label.
corpus::EventSequence sample_record(Rng& rng, const GenConfig& config,
                                    const Pathway& pathway, std::int64_t id);

struct SplitBundle {
    corpus::Dataset train;
    corpus::Dataset validation;
    corpus::Dataset test;
};

/// Round-robin over pathways; train balanced by whole-record rejection;
/// validation/test deduplicated on exact event lists, also across the two.
SplitBundle generate_dataset(const GenConfig& config);

}  // namespace xpb::synthgen
