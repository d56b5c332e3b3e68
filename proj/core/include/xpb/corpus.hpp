#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "xpb/errors.hpp"

namespace xpb::corpus {

enum class TokenCategory { Adverse, Helper, Unhelper, Noise };

char category_letter(TokenCategory c);
TokenCategory category_from_letter(char c);

inline constexpr int kMaxRecordLength = 30;
/// Index 0 is reserved for padding and never names a real token.
inline constexpr int kPaddingIndex = 0;

/// Token universe. Entries keep their declaration order; token i (0-based
/// entry position) carries model-facing index i+1, leaving 0 for padding.
class Vocabulary {
public:
    struct Entry {
        std::string name;
        TokenCategory category;
    };

    Vocabulary() = default;

    std::size_t size() const { return entries_.size(); }
    const std::vector<Entry>& entries() const { return entries_; }
    const Entry& entry(std::size_t pos) const { return entries_.at(pos); }
    const std::string& name_at(std::size_t pos) const { return entries_.at(pos).name; }

    bool contains(std::string_view name) const;
    /// Model-facing index in [1, V].
    int index_of(std::string_view name) const;
    TokenCategory category_of(std::string_view name) const;

    /// Entry positions of every token in `category`.
    std::vector<std::size_t> positions_in(TokenCategory category) const;
    std::size_t count_in(TokenCategory category) const;

    bool operator==(const Vocabulary& other) const;

    friend Vocabulary build_vocabulary(
        const std::vector<std::pair<std::string, TokenCategory>>& spec);

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, int> index_;  // name -> [1, V]
};

/// Throws DuplicateToken / EmptyVocabulary.
Vocabulary build_vocabulary(const std::vector<std::pair<std::string, TokenCategory>>& spec);

struct TimedEvent {
    std::string token;
    int gap = 0;  // t - t_event, non-negative; larger means further in the past

    bool operator==(const TimedEvent&) const = default;
};

/// One synthetic patient. Events are stored chronologically, oldest (largest
/// gap) first. `drivers` is the record's ground-truth informative token set.
struct EventSequence {
    std::int64_t id = 0;
    std::vector<TimedEvent> events;
    int label = 0;
    std::optional<std::string> pathway;
    std::set<std::string> drivers;

    bool operator==(const EventSequence&) const = default;
};

/// Throws SchemaError if the record breaks an invariant against `vocab`
/// (length bounds, unknown tokens, negative gaps, noise drivers).
void validate_record(const EventSequence& record, const Vocabulary& vocab);

enum class SplitTag { Train, Validation, Test };

std::string split_name(SplitTag tag);

struct Dataset {
    Vocabulary vocabulary;
    std::vector<EventSequence> records;
    SplitTag split = SplitTag::Train;
};

struct CountVector {
    /// values[i] = occurrences of vocabulary entry i; length V.
    std::vector<int> values;
};

struct IndexSequence {
    std::vector<int> indices;  // in [1, V], generation order preserved
    std::vector<int> gaps;
};

CountVector encode_counts(const EventSequence& record, const Vocabulary& vocab);
IndexSequence encode_indices(const EventSequence& record, const Vocabulary& vocab);

void write_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

/// Keeps all positives; negatives are subsampled without replacement until the
/// positive fraction is at least `target_positive_fraction`.
Dataset down_sample_negatives(const Dataset& ds, double target_positive_fraction,
                              std::uint64_t seed);

}  // namespace xpb::corpus
