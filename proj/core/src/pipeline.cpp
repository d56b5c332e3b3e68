#include "xpb/pipeline.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "xpb/attrib.hpp"
#include "xpb/errors.hpp"
#include "xpb/evalx.hpp"
#include "xpb/gbt.hpp"
#include "xpb/metrics.hpp"
#include "xpb/recurrent.hpp"
#include "xpb/rng.hpp"
#include "xpb/synthgen.hpp"

namespace xpb::harness {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr double kEfficiencyTolerance = 1e-6;
const char* kAttributionHeader = "observation_id,method,unit_label,position_or_feature,score";
const char* kSummaryHeader = "method,mean,min,max,included,excluded";

std::string fmt10(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write file: " + path.string());
    return out;
}

std::ifstream open_in_or_missing(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifact("missing file: " + path.string());
    return in;
}

recurrent::AttentionMode attention_for(ModelKind kind) {
    switch (kind) {
        case ModelKind::LstmDot: return recurrent::AttentionMode::DotProduct;
        case ModelKind::LstmSelf: return recurrent::AttentionMode::SelfAttention;
        case ModelKind::LstmPlain: return recurrent::AttentionMode::None;
        case ModelKind::Gbt: break;
    }
    throw Error("no attention mode for this model kind");
}

/// Caches for models loaded once per stage; count/sequence scoring closures.
struct ModelCache {
    std::map<ModelKind, gbt::GbtModel> gbts;
    std::map<ModelKind, recurrent::RecurrentModel> lstms;

    const gbt::GbtModel& gbt(const fs::path& dir, ModelKind kind) {
        auto it = gbts.find(kind);
        if (it != gbts.end()) return it->second;
        const fs::path path = dir / (model_name(kind) + ".json");
        if (!fs::exists(path)) throw MissingArtifact("missing model file: " + path.string());
        return gbts.emplace(kind, gbt::load_gbt(path)).first->second;
    }

    const recurrent::RecurrentModel& lstm(const fs::path& dir, ModelKind kind) {
        auto it = lstms.find(kind);
        if (it != lstms.end()) return it->second;
        const fs::path path = dir / (model_name(kind) + ".json");
        if (!fs::exists(path)) throw MissingArtifact("missing model file: " + path.string());
        return lstms.emplace(kind, recurrent::load_recurrent(path)).first->second;
    }
};

struct HistoryRow {
    std::string model;
    std::string epoch;
    std::string auc;
    std::string similarity;
};

std::vector<HistoryRow> read_history_csv(const fs::path& path) {
    auto in = open_in_or_missing(path);
    std::string line;
    if (!std::getline(in, line) || split_fields(line) != std::vector<std::string>{"model", "epoch", "auc", "similarity"})
        throw ParseError("bad history header in " + path.string(), 1);
    std::vector<HistoryRow> rows;
    long lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_fields(line);
        if (f.size() != 4) throw ParseError("bad history row in " + path.string(), lineno);
        rows.push_back({f[0], f[1], f[2], f[3]});
    }
    return rows;
}

}  // namespace

std::string mode_name(synthgen::GenMode mode) {
    return mode == synthgen::GenMode::EventDriven ? "event" : "sequence";
}

std::vector<ModelKind> unique_models(const ExperimentConfig& config) {
    std::vector<ModelKind> out;
    for (const auto& binding : config.methods)
        if (std::find(out.begin(), out.end(), binding.model) == out.end())
            out.push_back(binding.model);
    return out;
}

const StageRecord* Manifest::find(const std::string& stage) const {
    for (const auto& [key, record] : stages)
        if (key == stage) return &record;
    return nullptr;
}

void Manifest::upsert(const std::string& stage, StageRecord record) {
    for (auto& [key, existing] : stages) {
        if (key == stage) {
            existing = std::move(record);
            return;
        }
    }
    stages.emplace_back(stage, std::move(record));
}

Manifest load_manifest(const fs::path& path) {
    Manifest manifest;
    std::ifstream in(path, std::ios::binary);
    if (!in) return manifest;
    ordered_json doc;
    try {
        doc = ordered_json::parse(in);
        manifest.config_hash = doc.at("config_hash").get<std::string>();
        for (const auto& [key, value] : doc.at("stages").items()) {
            StageRecord record;
            record.status = value.at("status").get<std::string>();
            record.seconds = value.at("seconds").get<double>();
            for (const auto& f : value.at("files")) record.files.push_back(f.get<std::string>());
            manifest.stages.emplace_back(key, std::move(record));
        }
    } catch (const ordered_json::exception& e) {
        throw ParseError("malformed manifest " + path.string() + ": " + e.what(), 0);
    }
    return manifest;
}

void save_manifest(const Manifest& manifest, const fs::path& path) {
    ordered_json stages = ordered_json::object();
    for (const auto& [key, record] : manifest.stages)
        stages[key] = {{"status", record.status},
                       {"seconds", record.seconds},
                       {"files", record.files}};
    ordered_json doc = {{"config_hash", manifest.config_hash}, {"stages", stages}};
    auto out = open_out(path);
    out << doc.dump(2) << '\n';
}

Pipeline::Pipeline(ExperimentConfig config, RunOptions options)
    : config_(std::move(config)), options_(std::move(options)), out_(config_.output_dir) {
    config_.validate();
    const std::string hash = config_hash(config_);
    const fs::path manifest_path = out_ / "manifest.json";
    if (fs::exists(manifest_path)) {
        Manifest loaded = load_manifest(manifest_path);
        if (loaded.config_hash == hash) manifest_ = std::move(loaded);
    }
    manifest_.config_hash = hash;
}

bool Pipeline::begin_stage(const std::string& key) {
    if (!options_.force && manifest_.find(key) != nullptr) {
        std::cout << "[" << key << "] up to date under this config, skipping (use --force to rerun)\n";
        return false;
    }
    std::cout << "[" << key << "] running\n";
    return true;
}

void Pipeline::finish_stage(const std::string& key, double seconds, std::vector<std::string> files) {
    StageRecord record;
    record.seconds = seconds;
    record.files = std::move(files);
    manifest_.upsert(key, std::move(record));
    fs::create_directories(out_);
    save_manifest(manifest_, out_ / "manifest.json");
    std::cout << "[" << key << "] completed in " << fmt10(seconds) << "s\n";
}

fs::path Pipeline::mode_dir(synthgen::GenMode mode) const { return out_ / mode_name(mode); }

fs::path Pipeline::dataset_dir(synthgen::GenMode mode) const {
    if (config_.dataset.external_path) return fs::path(*config_.dataset.external_path);
    return mode_dir(mode);
}

corpus::Dataset Pipeline::load_split(synthgen::GenMode mode, corpus::SplitTag tag) const {
    const fs::path path = dataset_dir(mode) / (corpus::split_name(tag) + ".jsonl");
    if (!fs::exists(path))
        throw MissingArtifact("missing dataset split: " + path.string() +
                              "; run the generate stage first");
    return corpus::read_dataset(path);
}

void Pipeline::do_generate(synthgen::GenMode mode) {
    if (config_.dataset.external_path)
        throw ConfigError("generate works on synthetic dataset configs; dataset.path is set");
    const std::string mname = mode_name(mode);
    const std::string key = mname + ".generate";
    if (!begin_stage(key)) return;
    const auto t0 = std::chrono::steady_clock::now();

    synthgen::GenConfig gen =
        synthgen::standard_config(mode, derive_seed(config_.seed, "dataset." + mname));
    gen.counts = config_.dataset.counts;
    gen.decay = config_.dataset.decay;
    gen.max_length = config_.dataset.max_length;
    gen.validate();
    const synthgen::SplitBundle bundle = synthgen::generate_dataset(gen);

    const fs::path dir = mode_dir(mode);
    fs::create_directories(dir);
    corpus::write_dataset(bundle.train, dir / "train.jsonl");
    corpus::write_dataset(bundle.validation, dir / "validation.jsonl");
    corpus::write_dataset(bundle.test, dir / "test.jsonl");

    finish_stage(key, seconds_since(t0),
                 {mname + "/train.jsonl", mname + "/validation.jsonl", mname + "/test.jsonl"});
}

void Pipeline::do_train(synthgen::GenMode mode) {
    const std::string mname = mode_name(mode);
    std::optional<corpus::Dataset> train, val;
    const auto ensure_data = [&] {
        if (!train) {
            train = load_split(mode, corpus::SplitTag::Train);
            val = load_split(mode, corpus::SplitTag::Validation);
        }
    };

    std::vector<std::int64_t> tracked_ids;
    std::optional<attrib::BackgroundSet> tracking_background;
    const auto ensure_tracking = [&] {
        if (tracked_ids.empty()) {
            tracked_ids = evalx::pick_subsample(
                *val, static_cast<std::size_t>(config_.evaluation.subsample),
                derive_seed(config_.seed, "subsample." + mname));
            tracking_background = attrib::sample_background(
                *train, static_cast<std::size_t>(config_.attribution.tracking_background),
                derive_seed(config_.seed, "track.background." + mname));
        }
    };
    const auto tracking_shap_config = [&](const std::string& model, std::int64_t id) {
        attrib::ShapConfig sc;
        sc.coalition_samples = config_.attribution.tracking_coalitions;
        sc.l2_regularization = config_.attribution.shap_l2;
        sc.strategy = attrib::ShapConfig::Strategy::ForceSampled;
        sc.seed = derive_seed(config_.seed, "track." + mname + "." + model, static_cast<std::uint64_t>(id));
        return sc;
    };

    const fs::path dir = mode_dir(mode);
    for (const ModelKind kind : unique_models(config_)) {
        const std::string name = model_name(kind);
        const std::string key = mname + ".train." + name;
        if (!begin_stage(key)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        ensure_data();
        fs::create_directories(dir);

        TrainingHistory history;
        if (kind == ModelKind::Gbt) {
            gbt::SimilarityProbe probe;
            if (config_.evaluation.tracking) {
                ensure_tracking();
                probe = [&](const gbt::GbtModel& snapshot) {
                    const auto attribute = [&](const corpus::EventSequence& record) {
                        return attrib::shap_for_gbt(snapshot, record, *tracking_background,
                                                    tracking_shap_config(name, record.id));
                    };
                    return evalx::mean_subsample_similarity(*val, tracked_ids, attribute,
                                                            attrib::UnitSpace::CountSpace);
                };
            }
            auto [model, hist] = gbt::train_gbt(*train, *val, config_.gbt_params, probe);
            gbt::save_gbt(model, dir / (name + ".json"));
            history = std::move(hist);
        } else {
            recurrent::RecurrentConfig rc = config_.lstm_proto;
            rc.attention = attention_for(kind);
            rc.seed = derive_seed(config_.seed, "model." + mname + "." + name);
            recurrent::SimilarityProbe probe;
            if (config_.evaluation.tracking) {
                ensure_tracking();
                probe = [&](const recurrent::RecurrentModel& snapshot) {
                    const auto attribute = [&](const corpus::EventSequence& record) {
                        return attrib::shap_for_lstm(snapshot, record,
                                                     tracking_shap_config(name, record.id));
                    };
                    return evalx::mean_subsample_similarity(*val, tracked_ids, attribute,
                                                            attrib::UnitSpace::SequenceSpace);
                };
            }
            auto [model, hist] =
                recurrent::fit(recurrent::init_model(rc, train->vocabulary), *train, *val, rc, probe);
            recurrent::save_recurrent(model, dir / (name + ".json"));
            history = std::move(hist);
        }

        evalx::write_epoch_curve_csv(dir / (name + "_history.csv"), {{name, history}});
        const int best_auc = history.best_auc_epoch();
        const int best_sim = history.best_similarity_epoch();
        std::cout << "[" << key << "] best validation auc at epoch " << best_auc;
        if (best_sim > 0)
            std::cout << ", best similarity at epoch " << best_sim;
        std::cout << '\n';
        finish_stage(key, seconds_since(t0),
                     {mname + "/" + name + ".json", mname + "/" + name + "_history.csv"});
    }
}

void Pipeline::do_explain(synthgen::GenMode mode) {
    const std::string mname = mode_name(mode);
    const fs::path dir = mode_dir(mode);
    std::optional<corpus::Dataset> test;
    std::optional<attrib::BackgroundSet> background;
    ModelCache cache;

    const auto ensure_test = [&] {
        if (!test) test = load_split(mode, corpus::SplitTag::Test);
    };
    const auto ensure_background = [&] {
        if (!background) {
            const corpus::Dataset train = load_split(mode, corpus::SplitTag::Train);
            background = attrib::sample_background(
                train, static_cast<std::size_t>(config_.attribution.background_size),
                derive_seed(config_.seed, "background." + mname));
        }
    };

    for (const MethodBinding& binding : config_.methods) {
        const std::string label = binding_label(binding);
        const std::string key = mname + ".explain." + label;
        if (!begin_stage(key)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        require_compatible(binding);
        ensure_test();
        fs::create_directories(dir);

        const int limit = options_.explain_limit.value_or(config_.evaluation.explain_limit);
        const std::size_t n =
            limit < 0 ? test->records.size()
                      : std::min<std::size_t>(static_cast<std::size_t>(limit), test->records.size());

        const bool shapley = binding.method == attrib::Method::KernelShap ||
                             binding.method == attrib::Method::ExactShapley;
        const gbt::GbtModel* gm = nullptr;
        const recurrent::RecurrentModel* lm = nullptr;
        if (binding.model == ModelKind::Gbt) {
            gm = &cache.gbt(dir, binding.model);
            if (shapley) ensure_background();
        } else {
            lm = &cache.lstm(dir, binding.model);
        }

        const auto explain_one = [&](const corpus::EventSequence& record) {
            switch (binding.method) {
                case attrib::Method::KernelShap: {
                    attrib::ShapConfig sc;
                    sc.coalition_samples = config_.attribution.coalition_samples;
                    sc.l2_regularization = config_.attribution.shap_l2;
                    sc.seed = derive_seed(config_.seed, "shap." + mname + "." + label,
                                          static_cast<std::uint64_t>(record.id));
                    return gm ? attrib::shap_for_gbt(*gm, record, *background, sc)
                              : attrib::shap_for_lstm(*lm, record, sc);
                }
                case attrib::Method::ExactShapley:
                    return gm ? attrib::exact_shapley_for_gbt(*gm, record, *background)
                              : attrib::exact_shapley_for_lstm(*lm, record);
                case attrib::Method::Lrp:
                    return attrib::lrp_lstm(*lm, record, config_.attribution.lrp_eps);
                case attrib::Method::DotAttention:
                case attrib::Method::SelfAttention:
                    return attrib::attention_attribution(*lm, record);
            }
            throw Error("unreachable method");
        };
        const auto audit = [&](const corpus::EventSequence& record, const attrib::Attribution& attr) {
            if (!shapley) return;
            const double fx = gm ? gbt::predict_gbt(*gm, corpus::encode_counts(record, test->vocabulary))
                                 : recurrent::forward(*lm, corpus::encode_indices(record, test->vocabulary))
                                       .probability;
            const double total =
                attr.baseline + std::accumulate(attr.scores.begin(), attr.scores.end(), 0.0);
            if (std::fabs(total - fx) > kEfficiencyTolerance)
                throw NumericError("attribution efficiency audit failed for observation " +
                                   std::to_string(record.id) + ": |" + fmt17(total) + " - " +
                                   fmt17(fx) + "| > " + fmt17(kEfficiencyTolerance));
        };

        std::vector<attrib::Attribution> results(n);
        const int threads = std::clamp<int>(options_.threads, 1, static_cast<int>(std::max<std::size_t>(n, 1)));
        if (threads <= 1) {
            for (std::size_t i = 0; i < n; ++i) {
                results[i] = explain_one(test->records[i]);
                audit(test->records[i], results[i]);
            }
        } else {
            std::mutex error_mutex;
            std::exception_ptr first_error;
            std::vector<std::thread> pool;
            for (int t = 0; t < threads; ++t) {
                pool.emplace_back([&, t] {
                    try {
                        for (std::size_t i = static_cast<std::size_t>(t); i < n;
                             i += static_cast<std::size_t>(threads)) {
                            results[i] = explain_one(test->records[i]);
                            audit(test->records[i], results[i]);
                        }
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(error_mutex);
                        if (!first_error) first_error = std::current_exception();
                    }
                });
            }
            for (auto& worker : pool) worker.join();
            if (first_error) std::rethrow_exception(first_error);
        }

        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return test->records[a].id < test->records[b].id;
        });

        const std::string file_name = "attr_test_" + label + ".csv";
        auto out = open_out(dir / file_name);
        out << kAttributionHeader << '\n';
        for (const std::size_t i : order) {
            const corpus::EventSequence& record = test->records[i];
            const attrib::Attribution& attr = results[i];
            const auto labels = evalx::unit_labels(attr, test->vocabulary, record);
            for (std::size_t u = 0; u < attr.scores.size(); ++u)
                out << record.id << ',' << attrib::method_name(attr.method) << ',' << labels[u]
                    << ',' << u << ',' << fmt17(attr.scores[u]) << '\n';
        }
        out.close();

        finish_stage(key, seconds_since(t0), {mname + "/" + file_name});
    }
}

namespace {

std::vector<attrib::Attribution> read_attribution_csv(
    const fs::path& path, const MethodBinding& binding,
    const std::map<std::int64_t, const corpus::EventSequence*>& by_id, std::size_t vocab_size) {
    auto in = open_in_or_missing(path);
    std::string line;
    if (!std::getline(in, line) || split_fields(line) != split_fields(kAttributionHeader))
        throw ParseError("bad attribution header in " + path.string(), 1);

    const attrib::UnitSpace space = binding.model == ModelKind::Gbt
                                        ? attrib::UnitSpace::CountSpace
                                        : attrib::UnitSpace::SequenceSpace;
    std::vector<attrib::Attribution> out;
    attrib::Attribution current;
    bool has_current = false;
    long lineno = 1;

    const auto flush = [&] {
        if (has_current) out.push_back(std::move(current));
        has_current = false;
    };

    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_fields(line);
        if (f.size() != 5) throw ParseError("bad attribution row in " + path.string(), lineno);
        std::int64_t id = 0;
        std::size_t unit = 0;
        double score = 0.0;
        try {
            id = std::stoll(f[0]);
            unit = static_cast<std::size_t>(std::stoul(f[3]));
            score = std::stod(f[4]);
        } catch (const std::exception&) {
            throw ParseError("bad attribution value in " + path.string(), lineno);
        }
        const attrib::Method method = method_from_name(f[1]);
        if (method != binding.method)
            throw ParseError("attribution method mismatch in " + path.string(), lineno);

        if (!has_current || current.target != id) {
            flush();
            has_current = true;
            current = attrib::Attribution{};
            current.method = method;
            current.space = space;
            current.target = id;
            if (space == attrib::UnitSpace::CountSpace) {
                current.scores.assign(vocab_size, 0.0);
            } else {
                const auto it = by_id.find(id);
                if (it == by_id.end())
                    throw EvaluationError("attribution targets unknown observation " +
                                          std::to_string(id));
                current.scores.assign(it->second->events.size(), 0.0);
            }
        }
        if (unit >= current.scores.size())
            throw ParseError("attribution unit out of range in " + path.string(), lineno);
        current.scores[unit] = score;
    }
    flush();
    return out;
}

}  // namespace

void Pipeline::do_evaluate(synthgen::GenMode mode) {
    const std::string mname = mode_name(mode);
    const std::string key = mname + ".evaluate";
    if (!begin_stage(key)) return;
    const auto t0 = std::chrono::steady_clock::now();

    const corpus::Dataset test = load_split(mode, corpus::SplitTag::Test);
    const int limit = options_.explain_limit.value_or(config_.evaluation.explain_limit);
    const std::size_t n =
        limit < 0 ? test.records.size()
                  : std::min<std::size_t>(static_cast<std::size_t>(limit), test.records.size());
    corpus::Dataset covered;
    covered.vocabulary = test.vocabulary;
    covered.split = test.split;
    covered.records.assign(test.records.begin(), test.records.begin() + static_cast<std::ptrdiff_t>(n));

    std::map<std::int64_t, const corpus::EventSequence*> by_id;
    for (const auto& record : covered.records) by_id.emplace(record.id, &record);

    const fs::path dir = mode_dir(mode);
    std::vector<std::string> gaps;
    for (const MethodBinding& binding : config_.methods) {
        const fs::path path = dir / ("attr_test_" + binding_label(binding) + ".csv");
        if (!fs::exists(path)) gaps.push_back(path.string());
    }
    if (!gaps.empty())
        throw MissingArtifact("missing attribution artifacts: " + join(gaps, ", ") +
                              "; run the explain stage first");

    std::vector<std::pair<std::string, evalx::SetSimilarityReport>> local;
    std::vector<std::pair<std::string, evalx::GlobalImportance>> global;
    for (const MethodBinding& binding : config_.methods) {
        const std::string label = binding_label(binding);
        const attrib::UnitSpace space = binding.model == ModelKind::Gbt
                                            ? attrib::UnitSpace::CountSpace
                                            : attrib::UnitSpace::SequenceSpace;
        const auto attrs = read_attribution_csv(dir / ("attr_test_" + label + ".csv"), binding,
                                                by_id, test.vocabulary.size());
        local.emplace_back(label, evalx::local_similarity_sweep(covered, attrs, space));
        global.emplace_back(label, evalx::global_importance(covered, attrs));
    }

    evalx::write_local_similarity_csv(dir / "local_similarity.csv", local);
    evalx::write_global_importance_csv(dir / "global_importance.csv", global);
    {
        auto out = open_out(dir / "similarity_summary.csv");
        out << kSummaryHeader << '\n';
        for (const auto& [label, report] : local)
            out << label << ',' << fmt10(report.mean) << ',' << fmt10(report.min) << ','
                << fmt10(report.max) << ',' << report.rows.size() << ',' << report.excluded << '\n';
    }

    finish_stage(key, seconds_since(t0),
                 {mname + "/local_similarity.csv", mname + "/global_importance.csv",
                  mname + "/similarity_summary.csv"});
}

namespace {

struct SeriesPoint {
    double x = 0.0;
    double y = 0.0;
};

/// Minimal line chart; series are polylines over a fixed frame.
void write_line_svg(const fs::path& path,
                    const std::vector<std::pair<std::string, std::vector<SeriesPoint>>>& series,
                    const std::string& x_label, const std::string& y_label, double y_min,
                    double y_max) {
    const double width = 720, height = 440, margin = 56;
    double x_min = 1.0, x_max = 1.0;
    bool first = true;
    for (const auto& [_, points] : series)
        for (const auto& p : points) {
            x_min = first ? p.x : std::min(x_min, p.x);
            x_max = first ? p.x : std::max(x_max, p.x);
            first = false;
        }
    if (x_max <= x_min) x_max = x_min + 1.0;
    const auto sx = [&](double x) {
        return margin + (x - x_min) / (x_max - x_min) * (width - 2 * margin);
    };
    const auto sy = [&](double y) {
        return height - margin - (y - y_min) / (y_max - y_min) * (height - 2 * margin);
    };
    const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                             "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"};

    auto out = open_out(path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin
        << "\" y2=\"" << height - margin << "\" stroke=\"#444\"/>\n";
    out << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
        << height - margin << "\" stroke=\"#444\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double y = y_min + (y_max - y_min) * i / 4.0;
        out << "<text x=\"" << margin - 8 << "\" y=\"" << sy(y) + 4
            << "\" font-size=\"11\" text-anchor=\"end\" fill=\"#444\">" << fmt10(y) << "</text>\n";
    }
    out << "<text x=\"" << width / 2 << "\" y=\"" << height - 12
        << "\" font-size=\"12\" text-anchor=\"middle\" fill=\"#444\">" << x_label << "</text>\n";
    out << "<text x=\"16\" y=\"" << height / 2 << "\" font-size=\"12\" fill=\"#444\" "
        << "transform=\"rotate(-90 16 " << height / 2 << ")\" text-anchor=\"middle\">" << y_label
        << "</text>\n";
    std::size_t idx = 0;
    for (const auto& [name, points] : series) {
        const char* color = palette[idx % 8];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& p : points) out << fmt10(sx(p.x)) << ',' << fmt10(sy(std::clamp(p.y, y_min, y_max))) << ' ';
        out << "\"/>\n";
        out << "<text x=\"" << margin + 10 << "\" y=\"" << margin + 14 * static_cast<double>(idx)
            << "\" font-size=\"11\" fill=\"" << color << "\">" << name << "</text>\n";
        ++idx;
    }
    out << "</svg>\n";
}

void write_bar_svg(const fs::path& path,
                   const std::vector<std::pair<std::string, double>>& bars,
                   const std::string& x_label) {
    const double width = 720, margin = 56, row = 22;
    const double height = margin * 2 + row * static_cast<double>(bars.size());
    auto out = open_out(path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    const double bar_left = 240;
    std::size_t idx = 0;
    for (const auto& [name, value] : bars) {
        const double y = margin + row * static_cast<double>(idx);
        const double w = std::clamp(value, 0.0, 1.0) * (width - bar_left - margin);
        out << "<text x=\"" << bar_left - 8 << "\" y=\"" << y + 14
            << "\" font-size=\"11\" text-anchor=\"end\" fill=\"#444\">" << name << "</text>\n";
        out << "<rect x=\"" << bar_left << "\" y=\"" << y << "\" width=\"" << fmt10(w)
            << "\" height=\"16\" fill=\"#1f77b4\"/>\n";
        out << "<text x=\"" << bar_left + w + 6 << "\" y=\"" << y + 14
            << "\" font-size=\"11\" fill=\"#444\">" << fmt10(value) << "</text>\n";
        ++idx;
    }
    out << "<text x=\"" << width / 2 << "\" y=\"" << height - 12
        << "\" font-size=\"12\" text-anchor=\"middle\" fill=\"#444\">" << x_label << "</text>\n";
    out << "</svg>\n";
}

}  // namespace

void Pipeline::do_report() {
    const std::string key = "report";
    if (!begin_stage(key)) return;
    const auto t0 = std::chrono::steady_clock::now();

    std::vector<synthgen::GenMode> included;
    for (const synthgen::GenMode mode :
         {synthgen::GenMode::EventDriven, synthgen::GenMode::SequenceDriven}) {
        if (config_.dataset.external_path && mode != config_.dataset.mode) continue;
        if (fs::exists(dataset_dir(mode) / "test.jsonl")) included.push_back(mode);
    }
    if (included.empty())
        throw MissingArtifact("no dataset splits under " + out_.string() +
                              "; run the generate stage first");

    const std::vector<ModelKind> models = unique_models(config_);
    std::vector<std::string> gaps;
    for (const synthgen::GenMode mode : included) {
        const fs::path dir = mode_dir(mode);
        for (const ModelKind kind : models) {
            for (const std::string suffix : {".json", "_history.csv"}) {
                const fs::path path = dir / (model_name(kind) + suffix);
                if (!fs::exists(path)) gaps.push_back(path.string());
            }
        }
        for (const char* name : {"local_similarity.csv", "similarity_summary.csv",
                                 "global_importance.csv"}) {
            if (!fs::exists(dir / name)) gaps.push_back((dir / name).string());
        }
    }
    if (!gaps.empty())
        throw MissingArtifact("report inputs missing: " + join(gaps, ", "));

    const fs::path report_dir = out_ / "report";
    fs::create_directories(report_dir);
    std::vector<std::string> files;

    {
        auto out = open_out(report_dir / "auc_summary.csv");
        out << "dataset,model,split,auc\n";
        ModelCache cache;
        for (const synthgen::GenMode mode : included) {
            const fs::path dir = mode_dir(mode);
            cache.gbts.clear();
            cache.lstms.clear();
            const corpus::Dataset validation = load_split(mode, corpus::SplitTag::Validation);
            const corpus::Dataset testset = load_split(mode, corpus::SplitTag::Test);
            for (const ModelKind kind : models) {
                for (const corpus::SplitTag tag :
                     {corpus::SplitTag::Validation, corpus::SplitTag::Test}) {
                    const corpus::Dataset& ds =
                        tag == corpus::SplitTag::Validation ? validation : testset;
                    std::vector<double> scores(ds.records.size());
                    std::vector<int> labels(ds.records.size());
                    if (kind == ModelKind::Gbt) {
                        const gbt::GbtModel& model = cache.gbt(dir, kind);
                        for (std::size_t i = 0; i < ds.records.size(); ++i)
                            scores[i] = gbt::predict_gbt(
                                model, corpus::encode_counts(ds.records[i], ds.vocabulary));
                    } else {
                        const recurrent::RecurrentModel& model = cache.lstm(dir, kind);
                        for (std::size_t i = 0; i < ds.records.size(); ++i)
                            scores[i] =
                                recurrent::forward(model, corpus::encode_indices(ds.records[i],
                                                                                 ds.vocabulary))
                                    .probability;
                    }
                    for (std::size_t i = 0; i < ds.records.size(); ++i)
                        labels[i] = ds.records[i].label;
                    out << mode_name(mode) << ',' << model_name(kind) << ','
                        << corpus::split_name(tag) << ',' << fmt10(metrics::auc(labels, scores))
                        << '\n';
                }
            }
        }
        files.push_back("report/auc_summary.csv");
    }

    std::vector<std::pair<std::string, double>> mean_bars;
    {
        auto out = open_out(report_dir / "similarity_summary.csv");
        out << "dataset," << kSummaryHeader << '\n';
        for (const synthgen::GenMode mode : included) {
            auto in = open_in_or_missing(mode_dir(mode) / "similarity_summary.csv");
            std::string line;
            if (!std::getline(in, line) || line != kSummaryHeader)
                throw ParseError("bad similarity summary header for mode " + mode_name(mode), 1);
            long lineno = 1;
            while (std::getline(in, line)) {
                ++lineno;
                if (line.empty()) continue;
                const auto f = split_fields(line);
                if (f.size() != 6)
                    throw ParseError("bad similarity summary row for mode " + mode_name(mode), lineno);
                out << mode_name(mode) << ',' << line << '\n';
                mean_bars.emplace_back(mode_name(mode) + "." + f[0], std::stod(f[1]));
            }
        }
        files.push_back("report/similarity_summary.csv");
    }

    {
        auto out = open_out(report_dir / "similarity_histogram.csv");
        out << "dataset,method,bin_low,bin_high,count\n";
        for (const synthgen::GenMode mode : included) {
            auto in = open_in_or_missing(mode_dir(mode) / "local_similarity.csv");
            std::string line;
            if (!std::getline(in, line) || line != "method,id,similarity,n")
                throw ParseError("bad local similarity header for mode " + mode_name(mode), 1);
            std::vector<std::string> method_order;
            std::map<std::string, std::array<std::size_t, 10>> bins;
            long lineno = 1;
            while (std::getline(in, line)) {
                ++lineno;
                if (line.empty()) continue;
                const auto f = split_fields(line);
                if (f.size() != 4)
                    throw ParseError("bad local similarity row for mode " + mode_name(mode), lineno);
                if (bins.find(f[0]) == bins.end()) {
                    method_order.push_back(f[0]);
                    bins[f[0]].fill(0);
                }
                const double sim = std::stod(f[2]);
                const int bin = std::clamp(static_cast<int>(sim * 10.0), 0, 9);
                ++bins[f[0]][static_cast<std::size_t>(bin)];
            }
            for (const auto& method : method_order)
                for (int b = 0; b < 10; ++b)
                    out << mode_name(mode) << ',' << method << ',' << fmt10(b / 10.0) << ','
                        << fmt10((b + 1) / 10.0) << ',' << bins[method][static_cast<std::size_t>(b)]
                        << '\n';
        }
        files.push_back("report/similarity_histogram.csv");
    }

    std::vector<std::pair<std::string, std::vector<SeriesPoint>>> auc_series;
    {
        auto out = open_out(report_dir / "epoch_curve.csv");
        out << "model,epoch,auc,similarity\n";
        for (const synthgen::GenMode mode : included) {
            for (const ModelKind kind : models) {
                const std::string label = mode_name(mode) + "." + model_name(kind);
                std::vector<SeriesPoint> points;
                for (const auto& row :
                     read_history_csv(mode_dir(mode) / (model_name(kind) + "_history.csv"))) {
                    out << label << ',' << row.epoch << ',' << row.auc << ',' << row.similarity
                        << '\n';
                    points.push_back({std::stod(row.epoch), std::stod(row.auc)});
                }
                auc_series.emplace_back(label, std::move(points));
            }
        }
        files.push_back("report/epoch_curve.csv");
    }

    if (options_.svg) {
        write_line_svg(report_dir / "epoch_auc.svg", auc_series, "epoch", "validation auc", 0.4,
                       1.0);
        write_bar_svg(report_dir / "similarity_means.svg", mean_bars, "mean set similarity");
        files.push_back("report/epoch_auc.svg");
        files.push_back("report/similarity_means.svg");
    }

    finish_stage(key, seconds_since(t0), std::move(files));
}

void Pipeline::generate() { do_generate(config_.dataset.mode); }
void Pipeline::train() { do_train(config_.dataset.mode); }
void Pipeline::explain() { do_explain(config_.dataset.mode); }
void Pipeline::evaluate() { do_evaluate(config_.dataset.mode); }
void Pipeline::report() { do_report(); }

void Pipeline::run_all() {
    if (config_.dataset.external_path)
        throw ConfigError("all replicates the synthetic study; dataset.path is not supported here");
    for (const synthgen::GenMode mode :
         {synthgen::GenMode::EventDriven, synthgen::GenMode::SequenceDriven}) {
        do_generate(mode);
        do_train(mode);
        do_explain(mode);
        do_evaluate(mode);
    }
    do_report();
}

}  // namespace xpb::harness
