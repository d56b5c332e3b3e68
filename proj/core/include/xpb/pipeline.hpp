#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "xpb/config.hpp"
#include "xpb/corpus.hpp"

namespace xpb::harness {

struct StageRecord {
    std::string status = "completed";
    double seconds = 0.0;
    std::vector<std::string> files;  // relative to the output directory
};

/// Run ledger: the config hash plus one record per finished stage, persisted
/// as manifest.json after every stage. Every file a stage emits is listed.
struct Manifest {
    std::string config_hash;
    std::vector<std::pair<std::string, StageRecord>> stages;

    const StageRecord* find(const std::string& stage) const;
    void upsert(const std::string& stage, StageRecord record);
};

/// Absent file yields an empty manifest; a malformed one throws ParseError.
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

struct RunOptions {
    bool force = false;                // rerun stages the manifest marks done
    std::optional<int> explain_limit;  // overrides evaluation.explain_limit
    bool svg = false;                  // plot SVGs next to the report CSVs
    int threads = 1;                   // explain fan-out cap
};

/// Stage driver bound to one config and its output directory. A stage whose
/// key sits in the manifest under the current config hash is skipped unless
/// forced; a hash change discards the old ledger. Single-stage entry points
/// cover the configured dataset mode and throw MissingArtifact when upstream
/// outputs are absent; run_all covers both modes end to end plus the report.
class Pipeline {
public:
    Pipeline(ExperimentConfig config, RunOptions options);

    void generate();
    void train();
    void explain();
    void evaluate();
    void report();
    void run_all();

    const ExperimentConfig& config() const { return config_; }
    const Manifest& manifest() const { return manifest_; }

private:
    bool begin_stage(const std::string& key);
    void finish_stage(const std::string& key, double seconds, std::vector<std::string> files);

    std::filesystem::path dataset_dir(synthgen::GenMode mode) const;
    std::filesystem::path mode_dir(synthgen::GenMode mode) const;
    corpus::Dataset load_split(synthgen::GenMode mode, corpus::SplitTag tag) const;

    void do_generate(synthgen::GenMode mode);
    void do_train(synthgen::GenMode mode);
    void do_explain(synthgen::GenMode mode);
    void do_evaluate(synthgen::GenMode mode);
    void do_report();

    ExperimentConfig config_;
    RunOptions options_;
    std::filesystem::path out_;
    Manifest manifest_;
};

std::string mode_name(synthgen::GenMode mode);

/// Distinct models referenced by the config's bindings, first use first.
std::vector<ModelKind> unique_models(const ExperimentConfig& config);

}  // namespace xpb::harness
