#include "xpb/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_set>

namespace xpb::synthgen {

namespace {

constexpr std::size_t kRejectBudget = 200000;

std::string event_key(const corpus::EventSequence& r) {
    std::string key;
    for (const auto& ev : r.events) {
        key += ev.token;
        key += ':';
        key += std::to_string(ev.gap);
        key += ';';
    }
    return key;
}

void assert_token_frequencies(const SplitBundle& bundle) {
    const auto& vocab = bundle.train.vocabulary;
    std::vector<std::size_t> counts(vocab.size(), 0);
    std::size_t total = 0;
    for (const auto* ds : {&bundle.train, &bundle.validation, &bundle.test}) {
        for (const auto& r : ds->records) {
            for (const auto& ev : r.events) {
                ++counts[static_cast<std::size_t>(vocab.index_of(ev.token)) - 1];
                ++total;
            }
        }
    }
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        const double freq = static_cast<double>(counts[i]) / static_cast<double>(total);
        const bool noise = vocab.entry(i).category == corpus::TokenCategory::Noise;
        const bool ok = noise ? (freq >= 0.045 && freq <= 0.075) : (freq < 0.01);
        if (!ok)
            throw GenerationStalled("token frequency target missed for " +
                                    vocab.name_at(i) + ": " + std::to_string(freq));
    }
}

class SplitGenerator {
public:
    SplitGenerator(const GenConfig& config, std::uint64_t seed)
        : config_(config), rng_(seed) {}

    /// next_id advances once per accepted record.
    corpus::Dataset run(corpus::SplitTag split, std::size_t target, std::int64_t& next_id,
                        bool balance_labels,
                        std::unordered_set<std::string>* dedupe_keys) {
        corpus::Dataset out;
        out.vocabulary = config_.vocabulary;
        out.split = split;
        out.records.reserve(target);

        std::size_t bucket_target[2] = {target / 2, target - target / 2};  // {neg, pos}
        std::size_t bucket_fill[2] = {0, 0};
        std::size_t pathway_cursor = 0;
        std::size_t attempts = 0;
        while (out.records.size() < target) {
            const Pathway& pw = config_.pathways[pathway_cursor];
            corpus::EventSequence rec = sample_record(rng_, config_, pw, next_id);
            bool accept = true;
            if (balance_labels) {
                const auto b = static_cast<std::size_t>(rec.label);
                accept = bucket_fill[b] < bucket_target[b];
            }
            if (accept && dedupe_keys) accept = dedupe_keys->insert(event_key(rec)).second;
            if (!accept) {
                if (++attempts > kRejectBudget)
                    throw GenerationStalled("rejection budget exhausted for split " +
                                            corpus::split_name(split));
                continue;
            }
            attempts = 0;
            if (balance_labels) ++bucket_fill[static_cast<std::size_t>(rec.label)];
            out.records.push_back(std::move(rec));
            ++next_id;
            pathway_cursor = (pathway_cursor + 1) % config_.pathways.size();
        }
        return out;
    }

private:
    const GenConfig& config_;
    Rng rng_;
};

}  // namespace

std::vector<Pathway> standard_pathways() {
    return {
        {"A2H1", 2, 1, 0, 0.90}, {"A1H2", 1, 2, 0, 0.80}, {"A1H1", 1, 1, 0, 0.70},
        {"H1U1", 0, 1, 1, 0.40}, {"A1U2", 1, 0, 2, 0.30}, {"H1U2", 0, 1, 2, 0.20},
        {"U2", 0, 0, 2, 0.10},
    };
}

void DecayParams::validate() const {
    if (!(0.0 < a && a < h && h < u && u < 1.0))
        throw ConfigError("decay rates must satisfy 0 < a < h < u < 1");
    if (!(0.0 <= floor && floor < ceiling))
        throw ConfigError("decay clamp bounds must satisfy 0 <= floor < ceiling");
}

void GenConfig::validate() const {
    if (pathways.empty()) throw ConfigError("no pathways configured");
    if (counts.train == 0 || counts.validation == 0 || counts.test == 0)
        throw ConfigError("split counts must be positive");
    if (max_length < 1 || max_length > corpus::kMaxRecordLength)
        throw ConfigError("max length must lie in [1, 30]");
    if (vocabulary.size() == 0) throw ConfigError("vocabulary is empty");
    for (const auto& pw : this->pathways) {
        if (pw.token_count() < 1) throw ConfigError("pathway " + pw.id + " is empty");
        if (pw.token_count() > max_length)
            throw ConfigError("pathway " + pw.id + " exceeds max length");
        if (pw.base_probability < 0.0 || pw.base_probability > 1.0)
            throw ConfigError("pathway " + pw.id + " probability outside [0, 1]");
        const auto need = [&](corpus::TokenCategory c, int n) {
            if (static_cast<std::size_t>(n) > vocabulary.count_in(c))
                throw ConfigError("pathway " + pw.id + " wants more tokens than the category has");
        };
        need(corpus::TokenCategory::Adverse, pw.adverse);
        need(corpus::TokenCategory::Helper, pw.helper);
        need(corpus::TokenCategory::Unhelper, pw.unhelper);
    }
    if (mode == GenMode::SequenceDriven) decay.validate();
}

corpus::Vocabulary synthetic_vocabulary() {
    std::vector<std::pair<std::string, corpus::TokenCategory>> spec;
    auto add = [&](char prefix, corpus::TokenCategory cat, int n) {
        for (int i = 0; i < n; ++i) {
            char buf[8];
            std::snprintf(buf, sizeof buf, "%c%02d", prefix, i);
            spec.emplace_back(buf, cat);
        }
    };
    add('A', corpus::TokenCategory::Adverse, 10);
    add('H', corpus::TokenCategory::Helper, 10);
    add('U', corpus::TokenCategory::Unhelper, 10);
    add('N', corpus::TokenCategory::Noise, 15);
    return corpus::build_vocabulary(spec);
}

GenConfig standard_config(GenMode mode, std::uint64_t seed) {
    GenConfig cfg;
    cfg.mode = mode;
    cfg.vocabulary = synthetic_vocabulary();
    cfg.pathways = standard_pathways();
    cfg.seed = seed;
    return cfg;
}

const Pathway& find_pathway(const std::vector<Pathway>& configured, std::string_view id) {
    for (const auto& pw : configured)
        if (pw.id == id) return pw;
    throw UnknownPathway("unknown pathway: " + std::string(id));
}

double event_probability(const std::vector<Pathway>& configured, std::string_view id) {
    return find_pathway(configured, id).base_probability;
}

double sequence_probability(const corpus::EventSequence& events,
                            const corpus::Vocabulary& vocab, const DecayParams& decay) {
    double raw = 0.0;
    for (const auto& ev : events.events) {
        const double gap = ev.gap;
        switch (vocab.category_of(ev.token)) {
            case corpus::TokenCategory::Adverse: raw += std::exp(-decay.a * gap); break;
            case corpus::TokenCategory::Helper: raw += std::exp(-decay.h * gap); break;
            case corpus::TokenCategory::Unhelper: raw -= std::exp(-decay.u * gap); break;
            case corpus::TokenCategory::Noise: break;
        }
    }
    return std::max(decay.floor, std::min(decay.ceiling, raw));
}

corpus::EventSequence sample_record(Rng& rng, const GenConfig& config,
                                    const Pathway& pathway, std::int64_t id) {
    const auto& vocab = config.vocabulary;
    corpus::EventSequence rec;
    rec.id = id;
    rec.pathway = pathway.id;

    const int len = rng.uniform_int(pathway.token_count(), config.max_length);

    auto draw_category = [&](corpus::TokenCategory cat, int n) {
        const auto positions = vocab.positions_in(cat);
        for (std::size_t p : rng.sample_without_replacement(positions.size(),
                                                            static_cast<std::size_t>(n))) {
            const std::string& name = vocab.name_at(positions[p]);
            rec.events.push_back({name, 0});
            rec.drivers.insert(name);
        }
    };
    draw_category(corpus::TokenCategory::Adverse, pathway.adverse);
    draw_category(corpus::TokenCategory::Helper, pathway.helper);
    draw_category(corpus::TokenCategory::Unhelper, pathway.unhelper);

    const auto noise = vocab.positions_in(corpus::TokenCategory::Noise);
    while (rec.events.size() < static_cast<std::size_t>(len))
        rec.events.push_back({vocab.name_at(noise[rng.index(noise.size())]), 0});

    for (auto& ev : rec.events) ev.gap = rng.uniform_int(0, len - 1);
    // Shuffle first so ties in gap carry no category information, then order
    // chronologically, oldest (largest gap) first.
    rng.shuffle(rec.events);
    std::stable_sort(rec.events.begin(), rec.events.end(),
                     [](const auto& x, const auto& y) { return x.gap > y.gap; });

    const double p = config.mode == GenMode::EventDriven
                         ? pathway.base_probability
                         : sequence_probability(rec, vocab, config.decay);
    rec.label = rng.bernoulli(p) ? 1 : 0;
    return rec;
}

SplitBundle generate_dataset(const GenConfig& config) {
    config.validate();
    SplitBundle bundle;
    std::int64_t next_id = 0;
    {
        SplitGenerator gen(config, derive_seed(config.seed, "gen.train"));
        bundle.train = gen.run(corpus::SplitTag::Train, config.counts.train, next_id,
                               /*balance_labels=*/true, nullptr);
    }
    std::unordered_set<std::string> seen;
    {
        SplitGenerator gen(config, derive_seed(config.seed, "gen.validation"));
        bundle.validation = gen.run(corpus::SplitTag::Validation, config.counts.validation,
                                    next_id, false, &seen);
    }
    {
        SplitGenerator gen(config, derive_seed(config.seed, "gen.test"));
        bundle.test = gen.run(corpus::SplitTag::Test, config.counts.test, next_id, false, &seen);
    }
    assert_token_frequencies(bundle);
    return bundle;
}

}  // namespace xpb::synthgen
