#include <fstream>
#include <string>
#include <unordered_set>

#include "json.hpp"
#include "xpb/corpus.hpp"

namespace xpb::corpus {
namespace {

using json = nlohmann::ordered_json;

json header_json(const Dataset& ds) {
    json vocab = json::array();
    for (const auto& e : ds.vocabulary.entries()) {
        vocab.push_back({{"name", e.name},
                         {"category", std::string(1, category_letter(e.category))}});
    }
    return {{"version", 1}, {"vocab", std::move(vocab)}, {"split", split_name(ds.split)}};
}

json record_json(const EventSequence& r) {
    json events = json::array();
    for (const auto& ev : r.events) events.push_back({{"t", ev.token}, {"gap", ev.gap}});
    json drivers = json::array();
    for (const auto& d : r.drivers) drivers.push_back(d);
    json out = {{"id", r.id}, {"label", r.label}};
    out["pathway"] = r.pathway ? json(*r.pathway) : json(nullptr);
    out["drivers"] = std::move(drivers);
    out["events"] = std::move(events);
    return out;
}

json parse_line(const std::string& line, std::size_t line_no) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
        throw ParseError("malformed JSON", line_no);
    return j;
}

SplitTag split_from_name(const std::string& s, std::size_t line_no) {
    if (s == "train") return SplitTag::Train;
    if (s == "validation") return SplitTag::Validation;
    if (s == "test") return SplitTag::Test;
    throw ParseError("unknown split tag: " + s, line_no);
}

}  // namespace

void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out << header_json(ds).dump() << '\n';
    for (const auto& r : ds.records) out << record_json(r).dump() << '\n';
    if (!out) throw Error("write failed: " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open for reading: " + path.string());

    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw ParseError("missing header line", 1);
    ++line_no;

    Dataset ds;
    try {
        json h = parse_line(line, line_no);
        if (!h.contains("version") || h["version"].get<int>() != 1)
            throw ParseError("unsupported dataset version", line_no);
        std::vector<std::pair<std::string, TokenCategory>> spec;
        for (const auto& e : h.at("vocab")) {
            const auto cat = e.at("category").get<std::string>();
            if (cat.size() != 1) throw ParseError("bad category: " + cat, line_no);
            spec.emplace_back(e.at("name").get<std::string>(), category_from_letter(cat[0]));
        }
        ds.vocabulary = build_vocabulary(spec);
        if (h.contains("split"))
            ds.split = split_from_name(h["split"].get<std::string>(), line_no);
    } catch (const json::exception& e) {
        throw ParseError(e.what(), line_no);
    }

    std::unordered_set<std::int64_t> seen_ids;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        EventSequence r;
        try {
            json j = parse_line(line, line_no);
            r.id = j.at("id").get<std::int64_t>();
            r.label = j.at("label").get<int>();
            if (j.contains("pathway") && !j["pathway"].is_null())
                r.pathway = j["pathway"].get<std::string>();
            if (j.contains("drivers"))
                for (const auto& d : j["drivers"]) r.drivers.insert(d.get<std::string>());
            for (const auto& ev : j.at("events"))
                r.events.push_back({ev.at("t").get<std::string>(), ev.at("gap").get<int>()});
        } catch (const json::exception& e) {
            throw ParseError(e.what(), line_no);
        }
        validate_record(r, ds.vocabulary);
        if (!seen_ids.insert(r.id).second)
            throw SchemaError("duplicate record id " + std::to_string(r.id));
        ds.records.push_back(std::move(r));
    }
    return ds;
}

}  // namespace xpb::corpus
