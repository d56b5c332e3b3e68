#include "xpb/corpus.hpp"

#include <algorithm>

#include "xpb/rng.hpp"

namespace xpb::corpus {

char category_letter(TokenCategory c) {
    switch (c) {
        case TokenCategory::Adverse: return 'A';
        case TokenCategory::Helper: return 'H';
        case TokenCategory::Unhelper: return 'U';
        case TokenCategory::Noise: return 'N';
    }
    throw SchemaError("unreachable token category");
}

TokenCategory category_from_letter(char c) {
    switch (c) {
        case 'A': return TokenCategory::Adverse;
        case 'H': return TokenCategory::Helper;
        case 'U': return TokenCategory::Unhelper;
        case 'N': return TokenCategory::Noise;
    }
    throw SchemaError(std::string("unknown token category letter '") + c + "'");
}

bool Vocabulary::contains(std::string_view name) const {
    return index_.find(std::string(name)) != index_.end();
}

int Vocabulary::index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw UnknownToken("unknown token: " + std::string(name));
    return it->second;
}

TokenCategory Vocabulary::category_of(std::string_view name) const {
    return entries_.at(static_cast<std::size_t>(index_of(name)) - 1).category;
}

std::vector<std::size_t> Vocabulary::positions_in(TokenCategory category) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < entries_.size(); ++i)
        if (entries_[i].category == category) out.push_back(i);
    return out;
}

std::size_t Vocabulary::count_in(TokenCategory category) const {
    return positions_in(category).size();
}

bool Vocabulary::operator==(const Vocabulary& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].name != other.entries_[i].name) return false;
        if (entries_[i].category != other.entries_[i].category) return false;
    }
    return true;
}

Vocabulary build_vocabulary(const std::vector<std::pair<std::string, TokenCategory>>& spec) {
    if (spec.empty()) throw EmptyVocabulary("vocabulary spec is empty");
    Vocabulary v;
    v.entries_.reserve(spec.size());
    for (const auto& [name, category] : spec) {
        if (name.empty()) throw SchemaError("empty token name");
        auto [it, inserted] =
            v.index_.emplace(name, static_cast<int>(v.entries_.size()) + 1);
        if (!inserted) throw DuplicateToken("duplicate token: " + name);
        v.entries_.push_back({name, category});
    }
    return v;
}

void validate_record(const EventSequence& record, const Vocabulary& vocab) {
    if (record.events.empty())
        throw SchemaError("record " + std::to_string(record.id) + " has no events");
    if (record.events.size() > static_cast<std::size_t>(kMaxRecordLength))
        throw SchemaError("record " + std::to_string(record.id) + " exceeds max length");
    if (record.label != 0 && record.label != 1)
        throw SchemaError("record " + std::to_string(record.id) + " has non-binary label");
    for (const auto& ev : record.events) {
        if (!vocab.contains(ev.token))
            throw SchemaError("record " + std::to_string(record.id) +
                              " references unknown token " + ev.token);
        if (ev.gap < 0)
            throw SchemaError("record " + std::to_string(record.id) + " has negative gap");
    }
    for (const auto& d : record.drivers) {
        if (!vocab.contains(d))
            throw SchemaError("record " + std::to_string(record.id) +
                              " driver is not in vocabulary: " + d);
        if (vocab.category_of(d) == TokenCategory::Noise)
            throw SchemaError("record " + std::to_string(record.id) +
                              " lists a noise token as driver: " + d);
        const bool present = std::any_of(record.events.begin(), record.events.end(),
                                         [&](const TimedEvent& ev) { return ev.token == d; });
        if (!present)
            throw SchemaError("record " + std::to_string(record.id) +
                              " driver absent from events: " + d);
    }
}

std::string split_name(SplitTag tag) {
    switch (tag) {
        case SplitTag::Train: return "train";
        case SplitTag::Validation: return "validation";
        case SplitTag::Test: return "test";
    }
    throw SchemaError("unreachable split tag");
}

CountVector encode_counts(const EventSequence& record, const Vocabulary& vocab) {
    CountVector out;
    out.values.assign(vocab.size(), 0);
    for (const auto& ev : record.events)
        ++out.values[static_cast<std::size_t>(vocab.index_of(ev.token)) - 1];
    return out;
}

IndexSequence encode_indices(const EventSequence& record, const Vocabulary& vocab) {
    IndexSequence out;
    out.indices.reserve(record.events.size());
    out.gaps.reserve(record.events.size());
    for (const auto& ev : record.events) {
        out.indices.push_back(vocab.index_of(ev.token));
        out.gaps.push_back(ev.gap);
    }
    return out;
}

Dataset down_sample_negatives(const Dataset& ds, double target_positive_fraction,
                              std::uint64_t seed) {
    if (target_positive_fraction <= 0.0 || target_positive_fraction > 1.0)
        throw SchemaError("target positive fraction must lie in (0, 1]");
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < ds.records.size(); ++i)
        (ds.records[i].label == 1 ? pos : neg).push_back(i);
    if (pos.empty() || neg.empty())
        throw DegenerateDataset("down-sampling needs both classes present");

    // Largest negative count keeping positives at or above the target fraction.
    auto keep = static_cast<std::size_t>(static_cast<double>(pos.size()) *
                                         (1.0 - target_positive_fraction) /
                                         target_positive_fraction);
    keep = std::min(keep, neg.size());

    Rng rng(seed);
    std::vector<std::size_t> picked = rng.sample_without_replacement(neg.size(), keep);
    std::vector<std::size_t> kept = pos;
    for (std::size_t p : picked) kept.push_back(neg[p]);
    std::sort(kept.begin(), kept.end());

    Dataset out;
    out.vocabulary = ds.vocabulary;
    out.split = ds.split;
    out.records.reserve(kept.size());
    for (std::size_t i : kept) out.records.push_back(ds.records[i]);
    return out;
}

}  // namespace xpb::corpus
