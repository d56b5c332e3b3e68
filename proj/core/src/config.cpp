#include "xpb/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "json.hpp"
#include "xpb/errors.hpp"
#include "xpb/rng.hpp"

namespace xpb::harness {

namespace {

using nlohmann::ordered_json;

void reject_unknown_keys(const ordered_json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
    for (const auto& [key, _] : obj.items())
        if (allowed.find(key) == allowed.end())
            throw ConfigError("unknown key \"" + key + "\" in " + where);
}

template <typename T>
void read_field(const ordered_json& obj, const char* key, T& into) {
    if (!obj.contains(key)) return;
    try {
        into = obj.at(key).get<T>();
    } catch (const ordered_json::exception&) {
        throw ConfigError(std::string("bad value for \"") + key + "\"");
    }
}

}  // namespace

attrib::Method method_from_name(const std::string& name) {
    for (auto m : {attrib::Method::KernelShap, attrib::Method::ExactShapley,
                   attrib::Method::Lrp, attrib::Method::DotAttention,
                   attrib::Method::SelfAttention})
        if (attrib::method_name(m) == name) return m;
    throw ConfigError("unknown attribution method \"" + name + "\"");
}

std::string model_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::Gbt: return "gbt";
        case ModelKind::LstmDot: return "lstm-dot";
        case ModelKind::LstmSelf: return "lstm-self";
        case ModelKind::LstmPlain: return "lstm-plain";
    }
    throw Error("unreachable model kind");
}

ModelKind model_from_name(const std::string& name) {
    for (auto k : {ModelKind::Gbt, ModelKind::LstmDot, ModelKind::LstmSelf,
                   ModelKind::LstmPlain})
        if (model_name(k) == name) return k;
    throw ConfigError("unknown model \"" + name + "\"");
}

std::string binding_label(const MethodBinding& binding) {
    return model_name(binding.model) + "." + attrib::method_name(binding.method);
}

MethodBinding parse_binding(const std::string& label) {
    const auto dot = label.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == label.size())
        throw ConfigError("method binding \"" + label + "\" is not model.method");
    return {model_from_name(label.substr(0, dot)), method_from_name(label.substr(dot + 1))};
}

void require_compatible(const MethodBinding& binding) {
    const bool shapley = binding.method == attrib::Method::KernelShap ||
                         binding.method == attrib::Method::ExactShapley;
    bool ok = false;
    switch (binding.model) {
        case ModelKind::Gbt:
            ok = shapley;
            break;
        case ModelKind::LstmDot:
            ok = shapley || binding.method == attrib::Method::Lrp ||
                 binding.method == attrib::Method::DotAttention;
            break;
        case ModelKind::LstmSelf:
            ok = shapley || binding.method == attrib::Method::Lrp ||
                 binding.method == attrib::Method::SelfAttention;
            break;
        case ModelKind::LstmPlain:
            ok = shapley || binding.method == attrib::Method::Lrp;
            break;
    }
    if (!ok)
        throw IncompatibleMethod("method " + attrib::method_name(binding.method) +
                                 " cannot explain model " + model_name(binding.model));
}

void ExperimentConfig::validate() const {
    dataset.decay.validate();
    if (dataset.counts.train == 0 || dataset.counts.validation == 0 || dataset.counts.test == 0)
        throw ConfigError("all split counts must be positive");
    if (dataset.max_length < 1 || dataset.max_length > corpus::kMaxRecordLength)
        throw ConfigError("max_length outside [1, 30]");
    gbt_params.validate();
    lstm_proto.validate();
    if (lstm_preset != "right-sized" && lstm_preset != "oversized")
        throw ConfigError("lstm preset must be right-sized or oversized");
    if (attribution.coalition_samples < 2) throw ConfigError("coalition_samples too small");
    if (attribution.background_size < 1) throw ConfigError("background_size must be positive");
    if (attribution.lrp_eps <= 0.0) throw ConfigError("lrp_eps must be positive");
    if (attribution.shap_l2 < 0.0) throw ConfigError("shap_l2 must be non-negative");
    if (attribution.tracking_coalitions < 2 || attribution.tracking_background < 1)
        throw ConfigError("tracking attribution settings must be positive");
    if (evaluation.subsample < 1) throw ConfigError("subsample must be positive");
    if (evaluation.explain_limit < -1 || evaluation.explain_limit == 0)
        throw ConfigError("explain_limit must be positive or -1 for all");
    if (methods.empty()) throw ConfigError("at least one method binding required");
    std::set<std::string> seen;
    for (const auto& b : methods) {
        require_compatible(b);
        if (!seen.insert(binding_label(b)).second)
            throw ConfigError("duplicate method binding " + binding_label(b));
    }
}

ExperimentConfig default_config() {
    ExperimentConfig cfg;
    cfg.seed = 7;
    cfg.output_dir = "out";
    cfg.dataset.counts = {21000, 7000, 7000};
    cfg.methods = {
        {ModelKind::Gbt, attrib::Method::KernelShap},
        {ModelKind::LstmDot, attrib::Method::KernelShap},
        {ModelKind::LstmDot, attrib::Method::Lrp},
        {ModelKind::LstmDot, attrib::Method::DotAttention},
        {ModelKind::LstmSelf, attrib::Method::SelfAttention},
    };
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file: " + path.string());
    ordered_json doc;
    try {
        doc = ordered_json::parse(in);
    } catch (const ordered_json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config root must be an object");
    reject_unknown_keys(doc,
                        {"version", "seed", "output_dir", "dataset", "gbt", "lstm",
                         "attribution", "evaluation", "methods"},
                        "config");
    int version = 1;
    read_field(doc, "version", version);
    if (version != 1) throw ConfigError("unsupported config version");

    ExperimentConfig cfg = default_config();
    read_field(doc, "seed", cfg.seed);
    read_field(doc, "output_dir", cfg.output_dir);

    if (doc.contains("dataset")) {
        const auto& d = doc.at("dataset");
        reject_unknown_keys(d, {"mode", "path", "counts", "decay", "max_length"},
                            "dataset");
        if (d.contains("mode")) {
            const auto mode = d.at("mode").get<std::string>();
            if (mode == "event") cfg.dataset.mode = synthgen::GenMode::EventDriven;
            else if (mode == "sequence") cfg.dataset.mode = synthgen::GenMode::SequenceDriven;
            else throw ConfigError("dataset mode must be event or sequence");
        }
        if (d.contains("path") && !d.at("path").is_null())
            cfg.dataset.external_path = d.at("path").get<std::string>();
        if (d.contains("counts")) {
            const auto& c = d.at("counts");
            reject_unknown_keys(c, {"train", "validation", "test"}, "dataset.counts");
            read_field(c, "train", cfg.dataset.counts.train);
            read_field(c, "validation", cfg.dataset.counts.validation);
            read_field(c, "test", cfg.dataset.counts.test);
        }
        if (d.contains("decay")) {
            const auto& dec = d.at("decay");
            reject_unknown_keys(dec, {"adverse", "helper", "unhelper"}, "dataset.decay");
            read_field(dec, "adverse", cfg.dataset.decay.a);
            read_field(dec, "helper", cfg.dataset.decay.h);
            read_field(dec, "unhelper", cfg.dataset.decay.u);
        }
        read_field(d, "max_length", cfg.dataset.max_length);
    }

    if (doc.contains("gbt")) {
        const auto& g = doc.at("gbt");
        reject_unknown_keys(g,
                            {"rounds", "max_depth", "shrinkage", "l2_leaf_penalty",
                             "min_child_weight", "checkpoint_interval"},
                            "gbt");
        read_field(g, "rounds", cfg.gbt_params.rounds);
        read_field(g, "max_depth", cfg.gbt_params.max_depth);
        read_field(g, "shrinkage", cfg.gbt_params.shrinkage);
        read_field(g, "l2_leaf_penalty", cfg.gbt_params.l2_leaf_penalty);
        read_field(g, "min_child_weight", cfg.gbt_params.min_child_weight);
        read_field(g, "checkpoint_interval", cfg.gbt_params.checkpoint_interval);
    }

    if (doc.contains("lstm")) {
        const auto& l = doc.at("lstm");
        reject_unknown_keys(l,
                            {"preset", "embedding_dim", "hidden_dim", "learning_rate",
                             "epochs", "batch_size", "l2_penalty"},
                            "lstm");
        read_field(l, "preset", cfg.lstm_preset);
        if (cfg.lstm_preset == "oversized") {
            cfg.lstm_proto.embedding_dim = 16;
            cfg.lstm_proto.learning_rate = 0.001;
        }
        read_field(l, "embedding_dim", cfg.lstm_proto.embedding_dim);
        read_field(l, "hidden_dim", cfg.lstm_proto.hidden_dim);
        read_field(l, "learning_rate", cfg.lstm_proto.learning_rate);
        read_field(l, "epochs", cfg.lstm_proto.epochs);
        read_field(l, "batch_size", cfg.lstm_proto.batch_size);
        read_field(l, "l2_penalty", cfg.lstm_proto.l2_penalty);
    }

    if (doc.contains("attribution")) {
        const auto& a = doc.at("attribution");
        reject_unknown_keys(a,
                            {"coalition_samples", "shap_l2", "background_size", "lrp_eps",
                             "tracking_coalitions", "tracking_background"},
                            "attribution");
        read_field(a, "coalition_samples", cfg.attribution.coalition_samples);
        read_field(a, "shap_l2", cfg.attribution.shap_l2);
        read_field(a, "background_size", cfg.attribution.background_size);
        read_field(a, "lrp_eps", cfg.attribution.lrp_eps);
        read_field(a, "tracking_coalitions", cfg.attribution.tracking_coalitions);
        read_field(a, "tracking_background", cfg.attribution.tracking_background);
    }

    if (doc.contains("evaluation")) {
        const auto& e = doc.at("evaluation");
        reject_unknown_keys(e, {"subsample", "explain_limit", "tracking"}, "evaluation");
        read_field(e, "subsample", cfg.evaluation.subsample);
        read_field(e, "explain_limit", cfg.evaluation.explain_limit);
        read_field(e, "tracking", cfg.evaluation.tracking);
    }

    if (doc.contains("methods")) {
        cfg.methods.clear();
        for (const auto& item : doc.at("methods"))
            cfg.methods.push_back(parse_binding(item.get<std::string>()));
    }

    cfg.validate();
    return cfg;
}

std::string config_hash(const ExperimentConfig& config) {
    ordered_json j;
    j["version"] = 1;
    j["seed"] = config.seed;
    j["dataset"] = {
        {"mode", config.dataset.mode == synthgen::GenMode::EventDriven ? "event" : "sequence"},
        {"path", config.dataset.external_path ? ordered_json(*config.dataset.external_path)
                                              : ordered_json(nullptr)},
        {"counts",
         {{"train", config.dataset.counts.train},
          {"validation", config.dataset.counts.validation},
          {"test", config.dataset.counts.test}}},
        {"decay",
         {{"adverse", config.dataset.decay.a},
          {"helper", config.dataset.decay.h},
          {"unhelper", config.dataset.decay.u}}},
        {"max_length", config.dataset.max_length},
    };
    j["gbt"] = {{"rounds", config.gbt_params.rounds},
                {"max_depth", config.gbt_params.max_depth},
                {"shrinkage", config.gbt_params.shrinkage},
                {"l2_leaf_penalty", config.gbt_params.l2_leaf_penalty},
                {"min_child_weight", config.gbt_params.min_child_weight},
                {"checkpoint_interval", config.gbt_params.checkpoint_interval}};
    j["lstm"] = {{"embedding_dim", config.lstm_proto.embedding_dim},
                 {"hidden_dim", config.lstm_proto.hidden_dim},
                 {"learning_rate", config.lstm_proto.learning_rate},
                 {"epochs", config.lstm_proto.epochs},
                 {"batch_size", config.lstm_proto.batch_size},
                 {"l2_penalty", config.lstm_proto.l2_penalty}};
    j["attribution"] = {{"coalition_samples", config.attribution.coalition_samples},
                        {"shap_l2", config.attribution.shap_l2},
                        {"background_size", config.attribution.background_size},
                        {"lrp_eps", config.attribution.lrp_eps},
                        {"tracking_coalitions", config.attribution.tracking_coalitions},
                        {"tracking_background", config.attribution.tracking_background}};
    j["evaluation"] = {{"subsample", config.evaluation.subsample},
                       {"explain_limit", config.evaluation.explain_limit},
                       {"tracking", config.evaluation.tracking}};
    ordered_json methods = ordered_json::array();
    for (const auto& b : config.methods) methods.push_back(binding_label(b));
    j["methods"] = methods;

    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(hash_label(j.dump())));
    return buf;
}

}  // namespace xpb::harness
