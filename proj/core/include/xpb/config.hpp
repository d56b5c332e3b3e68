#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "xpb/attrib.hpp"
#include "xpb/gbt.hpp"
#include "xpb/recurrent.hpp"
#include "xpb/synthgen.hpp"

namespace xpb::harness {

/// Model identities the pipeline can train and explain.
enum class ModelKind { Gbt, LstmDot, LstmSelf, LstmPlain };

std::string model_name(ModelKind kind);
ModelKind model_from_name(const std::string& name);          // throws ConfigError
attrib::Method method_from_name(const std::string& name);    // throws ConfigError

/// One explainer bound to one model, e.g. "lstm-dot.lrp".
struct MethodBinding {
    ModelKind model = ModelKind::Gbt;
    attrib::Method method = attrib::Method::KernelShap;
};

std::string binding_label(const MethodBinding& binding);
MethodBinding parse_binding(const std::string& label);  // throws ConfigError
/// Throws IncompatibleMethod when the model cannot serve the method.
void require_compatible(const MethodBinding& binding);

struct DatasetSection {
    synthgen::GenMode mode = synthgen::GenMode::EventDriven;
    std::optional<std::string> external_path;  // pre-built JSONL directory
    synthgen::SplitCounts counts;
    synthgen::DecayParams decay;
    int max_length = corpus::kMaxRecordLength;
};

struct AttributionSection {
    int coalition_samples = 1024;
    double shap_l2 = 0.0;
    int background_size = 300;
    double lrp_eps = 1e-3;
    // Cheaper settings for the per-epoch tracking probes.
    int tracking_coalitions = 256;
    int tracking_background = 32;
};

struct EvaluationSection {
    int subsample = 128;       // tracking subsample of validation ids
    int explain_limit = 200;   // observations attributed per split sweep
    bool tracking = true;      // dual-metric curves during training
};

struct ExperimentConfig {
    std::uint64_t seed = 7;
    std::string output_dir = "out";
    DatasetSection dataset;
    gbt::GbtParams gbt_params;
    recurrent::RecurrentConfig lstm_proto;  // attention/seed filled per model
    std::string lstm_preset = "right-sized";
    AttributionSection attribution;
    EvaluationSection evaluation;
    std::vector<MethodBinding> methods;  // the explain/report matrix

    void validate() const;  // throws ConfigError
};

/// Full-study preset: 21k/7k/7k records, V=45, five method bindings.
ExperimentConfig default_config();

/// Defaults overridden by the JSON file's present keys; unknown keys and a
/// version other than 1 are rejected.
ExperimentConfig load_config(const std::filesystem::path& path);

/// Hash of every semantically meaningful field (output_dir excluded), as 16
/// hex digits; drives stage skipping.
std::string config_hash(const ExperimentConfig& config);

}  // namespace xpb::harness
