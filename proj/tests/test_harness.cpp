#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "xpb/config.hpp"
#include "xpb/corpus.hpp"
#include "xpb/errors.hpp"
#include "xpb/pipeline.hpp"

using namespace xpb;
using harness::ExperimentConfig;
using harness::Manifest;
using harness::MethodBinding;
using harness::ModelKind;
using harness::Pipeline;
using harness::RunOptions;

namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("xpb_harness_" + name);
    fs::remove_all(dir);
    return dir;
}

ExperimentConfig tiny_config(std::uint64_t seed, const fs::path& out) {
    ExperimentConfig cfg = harness::default_config();
    cfg.seed = seed;
    cfg.output_dir = out.string();
    cfg.dataset.counts = {180, 60, 60};
    cfg.gbt_params.rounds = 8;
    cfg.gbt_params.checkpoint_interval = 4;
    cfg.lstm_proto.epochs = 2;
    cfg.attribution.coalition_samples = 128;
    cfg.attribution.background_size = 16;
    cfg.attribution.tracking_coalitions = 128;
    cfg.attribution.tracking_background = 4;
    cfg.evaluation.subsample = 6;
    cfg.evaluation.explain_limit = 6;
    return cfg;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::set<std::string> walk_files(const fs::path& root) {
    std::set<std::string> out;
    for (const auto& entry : fs::recursive_directory_iterator(root))
        if (entry.is_regular_file())
            out.insert(fs::relative(entry.path(), root).generic_string());
    return out;
}

std::set<std::int64_t> attributed_ids(const fs::path& csv) {
    std::ifstream in(csv);
    REQUIRE(bool(in));
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "observation_id,method,unit_label,position_or_feature,score");
    std::set<std::int64_t> ids;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ids.insert(std::stoll(line.substr(0, line.find(','))));
    }
    return ids;
}

void write_file(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
}

}  // namespace

TEST_CASE("model and method names round trip") {
    for (const ModelKind kind : {ModelKind::Gbt, ModelKind::LstmDot, ModelKind::LstmSelf,
                                 ModelKind::LstmPlain})
        CHECK(harness::model_from_name(harness::model_name(kind)) == kind);
    CHECK(harness::model_name(ModelKind::LstmDot) == "lstm-dot");
    CHECK_THROWS_AS(harness::model_from_name("forest"), ConfigError);
    CHECK_THROWS_AS(harness::method_from_name("gradcam"), ConfigError);
}

TEST_CASE("binding labels parse back to themselves") {
    const MethodBinding binding{ModelKind::LstmSelf, attrib::Method::SelfAttention};
    CHECK(harness::binding_label(binding) == "lstm-self.self_attention");
    const MethodBinding parsed = harness::parse_binding("lstm-self.self_attention");
    CHECK(parsed.model == binding.model);
    CHECK(parsed.method == binding.method);
    CHECK_THROWS_AS(harness::parse_binding("lstm-dot"), ConfigError);
    CHECK_THROWS_AS(harness::parse_binding(".lrp"), ConfigError);
    CHECK_THROWS_AS(harness::parse_binding("gbt."), ConfigError);
}

TEST_CASE("compatibility matrix") {
    const auto allowed = [](ModelKind model, attrib::Method method) {
        switch (method) {
            case attrib::Method::KernelShap:
            case attrib::Method::ExactShapley: return true;
            case attrib::Method::Lrp: return model != ModelKind::Gbt;
            case attrib::Method::DotAttention: return model == ModelKind::LstmDot;
            case attrib::Method::SelfAttention: return model == ModelKind::LstmSelf;
        }
        return false;
    };
    for (const ModelKind model : {ModelKind::Gbt, ModelKind::LstmDot, ModelKind::LstmSelf,
                                  ModelKind::LstmPlain}) {
        for (const attrib::Method method :
             {attrib::Method::KernelShap, attrib::Method::ExactShapley, attrib::Method::Lrp,
              attrib::Method::DotAttention, attrib::Method::SelfAttention}) {
            const MethodBinding binding{model, method};
            if (allowed(model, method))
                CHECK_NOTHROW(harness::require_compatible(binding));
            else
                CHECK_THROWS_AS(harness::require_compatible(binding), IncompatibleMethod);
        }
    }
}

TEST_CASE("default config validates and hashes semantically") {
    ExperimentConfig cfg = harness::default_config();
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.methods.size() == 5);
    CHECK(cfg.dataset.counts.train == 21000);

    const std::string base = harness::config_hash(cfg);
    CHECK(base.size() == 16);
    CHECK(base == harness::config_hash(cfg));

    ExperimentConfig moved = cfg;
    moved.output_dir = "elsewhere";
    CHECK(harness::config_hash(moved) == base);

    ExperimentConfig reseeded = cfg;
    reseeded.seed = 8;
    CHECK(harness::config_hash(reseeded) != base);

    ExperimentConfig remodeled = cfg;
    remodeled.methods.pop_back();
    CHECK(harness::config_hash(remodeled) != base);
}

TEST_CASE("config validation rejects broken settings") {
    const fs::path out = fresh_dir("cfg_validate");
    ExperimentConfig cfg = tiny_config(3, out);

    ExperimentConfig bad = cfg;
    bad.methods.push_back({ModelKind::Gbt, attrib::Method::KernelShap});
    CHECK_THROWS_AS(bad.validate(), ConfigError);  // duplicate binding

    bad = cfg;
    bad.methods = {{ModelKind::Gbt, attrib::Method::Lrp}};
    CHECK_THROWS_AS(bad.validate(), IncompatibleMethod);

    bad = cfg;
    bad.methods.clear();
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = cfg;
    bad.evaluation.explain_limit = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = cfg;
    bad.attribution.lrp_eps = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = cfg;
    bad.lstm_preset = "huge";
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("config files override defaults field by field") {
    const fs::path dir = fresh_dir("cfg_files");
    fs::create_directories(dir);

    const fs::path good = dir / "good.json";
    write_file(good, R"({
        "version": 1,
        "seed": 99,
        "output_dir": "runs/x",
        "dataset": {"mode": "sequence", "counts": {"train": 500}, "decay": {"helper": 0.2}},
        "gbt": {"rounds": 12},
        "lstm": {"preset": "oversized"},
        "attribution": {"coalition_samples": 512},
        "evaluation": {"tracking": false},
        "methods": ["lstm-dot.lrp", "gbt.kernel_shap"]
    })");
    const ExperimentConfig cfg = harness::load_config(good);
    CHECK(cfg.seed == 99);
    CHECK(cfg.output_dir == "runs/x");
    CHECK(cfg.dataset.mode == synthgen::GenMode::SequenceDriven);
    CHECK(cfg.dataset.counts.train == 500);
    CHECK(cfg.dataset.counts.validation == 7000);  // untouched default
    CHECK(cfg.dataset.decay.h == doctest::Approx(0.2));
    CHECK(cfg.gbt_params.rounds == 12);
    CHECK(cfg.lstm_preset == "oversized");
    CHECK(cfg.lstm_proto.embedding_dim == 16);
    CHECK(cfg.lstm_proto.learning_rate == doctest::Approx(0.001));
    CHECK(cfg.attribution.coalition_samples == 512);
    CHECK(cfg.evaluation.tracking == false);
    REQUIRE(cfg.methods.size() == 2);
    CHECK(harness::binding_label(cfg.methods[0]) == "lstm-dot.lrp");
    CHECK(harness::binding_label(cfg.methods[1]) == "gbt.kernel_shap");

    const fs::path explicit_beats_preset = dir / "explicit.json";
    write_file(explicit_beats_preset,
               R"({"version": 1, "lstm": {"preset": "oversized", "embedding_dim": 24}})");
    CHECK(harness::load_config(explicit_beats_preset).lstm_proto.embedding_dim == 24);

    write_file(dir / "unknown.json", R"({"version": 1, "bogus": true})");
    CHECK_THROWS_AS(harness::load_config(dir / "unknown.json"), ConfigError);

    write_file(dir / "nested_unknown.json", R"({"version": 1, "gbt": {"trees": 3}})");
    CHECK_THROWS_AS(harness::load_config(dir / "nested_unknown.json"), ConfigError);

    write_file(dir / "version.json", R"({"version": 2})");
    CHECK_THROWS_AS(harness::load_config(dir / "version.json"), ConfigError);

    write_file(dir / "broken.json", "{not json");
    CHECK_THROWS_AS(harness::load_config(dir / "broken.json"), ConfigError);

    write_file(dir / "dupmethods.json",
               R"({"version": 1, "methods": ["gbt.kernel_shap", "gbt.kernel_shap"]})");
    CHECK_THROWS_AS(harness::load_config(dir / "dupmethods.json"), ConfigError);

    write_file(dir / "badmode.json", R"({"version": 1, "dataset": {"mode": "panel"}})");
    CHECK_THROWS_AS(harness::load_config(dir / "badmode.json"), ConfigError);

    CHECK_THROWS_AS(harness::load_config(dir / "absent.json"), ConfigError);
}

TEST_CASE("manifest round trips and tolerates absence") {
    const fs::path dir = fresh_dir("manifest");
    fs::create_directories(dir);

    Manifest manifest;
    manifest.config_hash = "00ff00ff00ff00ff";
    manifest.upsert("event.generate", {"completed", 1.25, {"event/train.jsonl"}});
    manifest.upsert("report", {"completed", 0.5, {"report/auc_summary.csv"}});
    manifest.upsert("event.generate", {"completed", 2.0, {"event/train.jsonl", "event/test.jsonl"}});

    const fs::path path = dir / "manifest.json";
    harness::save_manifest(manifest, path);
    const Manifest loaded = harness::load_manifest(path);
    CHECK(loaded.config_hash == manifest.config_hash);
    REQUIRE(loaded.stages.size() == 2);
    CHECK(loaded.stages[0].first == "event.generate");
    CHECK(loaded.stages[0].second.seconds == doctest::Approx(2.0));
    CHECK(loaded.stages[0].second.files.size() == 2);
    CHECK(loaded.stages[1].first == "report");
    CHECK(loaded.find("report") != nullptr);
    CHECK(loaded.find("sequence.generate") == nullptr);

    CHECK(harness::load_manifest(dir / "absent.json").stages.empty());

    write_file(dir / "broken.json", "{\"config_hash\": 3}");
    CHECK_THROWS_AS(harness::load_manifest(dir / "broken.json"), ParseError);
}

TEST_CASE("full pipeline is reproducible and the manifest is complete") {
    const fs::path out_a = fresh_dir("all_a");
    const fs::path out_b = fresh_dir("all_b");

    RunOptions options;
    options.svg = true;
    Pipeline(tiny_config(5, out_a), options).run_all();
    Pipeline(tiny_config(5, out_b), options).run_all();

    const std::set<std::string> files_a = walk_files(out_a);
    CHECK(files_a == walk_files(out_b));
    for (const std::string& rel : files_a) {
        if (rel == "manifest.json") continue;  // stage timings differ
        INFO("file ", rel);
        CHECK(slurp(out_a / rel) == slurp(out_b / rel));
    }

    // Expected artifact skeleton.
    for (const char* rel :
         {"event/train.jsonl", "event/validation.jsonl", "event/test.jsonl", "event/gbt.json",
          "event/gbt_history.csv", "event/lstm-dot.json", "event/lstm-self.json",
          "event/attr_test_gbt.kernel_shap.csv", "event/attr_test_lstm-dot.kernel_shap.csv",
          "event/attr_test_lstm-dot.lrp.csv", "event/attr_test_lstm-dot.dot_attention.csv",
          "event/attr_test_lstm-self.self_attention.csv", "event/local_similarity.csv",
          "event/similarity_summary.csv", "event/global_importance.csv",
          "sequence/test.jsonl", "sequence/attr_test_lstm-dot.lrp.csv",
          "report/auc_summary.csv", "report/similarity_summary.csv",
          "report/similarity_histogram.csv", "report/epoch_curve.csv", "report/epoch_auc.svg",
          "report/similarity_means.svg", "manifest.json"})
        CHECK(files_a.count(rel) == 1);

    // Every emitted file is claimed by exactly the manifest; nothing strays.
    const Manifest manifest = harness::load_manifest(out_a / "manifest.json");
    std::set<std::string> claimed{"manifest.json"};
    for (const auto& [stage, record] : manifest.stages) {
        CHECK(record.status == "completed");
        claimed.insert(record.files.begin(), record.files.end());
    }
    CHECK(claimed == files_a);

    // The explain stage honored the configured limit for every binding.
    for (const char* rel :
         {"event/attr_test_gbt.kernel_shap.csv", "event/attr_test_lstm-dot.lrp.csv",
          "sequence/attr_test_lstm-self.self_attention.csv"})
        CHECK(attributed_ids(out_a / rel).size() == 6);

    // Histogram bins per method sum to the summary's included count.
    std::map<std::string, std::size_t> included;
    {
        std::ifstream in(out_a / "report" / "similarity_summary.csv");
        std::string line;
        REQUIRE(std::getline(in, line));
        CHECK(line == "dataset,method,mean,min,max,included,excluded");
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::vector<std::string> f;
            std::istringstream row(line);
            for (std::string field; std::getline(row, field, ',');) f.push_back(field);
            REQUIRE(f.size() == 7);
            included[f[0] + "." + f[1]] = std::stoul(f[5]);
        }
        CHECK(included.size() == 10);  // 5 methods x 2 datasets
    }
    {
        std::map<std::string, std::size_t> binned;
        std::ifstream in(out_a / "report" / "similarity_histogram.csv");
        std::string line;
        REQUIRE(std::getline(in, line));
        CHECK(line == "dataset,method,bin_low,bin_high,count");
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::vector<std::string> f;
            std::istringstream row(line);
            for (std::string field; std::getline(row, field, ',');) f.push_back(field);
            REQUIRE(f.size() == 5);
            binned[f[0] + "." + f[1]] += std::stoul(f[4]);
        }
        CHECK(binned == included);
    }

    // AUC summary covers every model on both splits of both datasets.
    const std::string auc = slurp(out_a / "report" / "auc_summary.csv");
    CHECK(std::count(auc.begin(), auc.end(), '\n') == 1 + 2 * 3 * 2);
    CHECK(auc.find("event,gbt,validation,") != std::string::npos);
    CHECK(auc.find("sequence,lstm-self,test,") != std::string::npos);
}

TEST_CASE("completed stages are skipped unless forced") {
    const fs::path out = fresh_dir("skip");
    Pipeline(tiny_config(6, out), RunOptions{}).run_all();

    // A deleted artifact stays deleted while the manifest marks the stage done.
    fs::remove(out / "event" / "gbt.json");
    Pipeline(tiny_config(6, out), RunOptions{}).run_all();
    CHECK(!fs::exists(out / "event" / "gbt.json"));

    RunOptions force;
    force.force = true;
    Pipeline(tiny_config(6, out), force).run_all();
    CHECK(fs::exists(out / "event" / "gbt.json"));

    // A config change invalidates the ledger even with artifacts present.
    ExperimentConfig changed = tiny_config(6, out);
    changed.gbt_params.rounds = 9;
    Pipeline pipeline(std::move(changed), RunOptions{});
    CHECK(pipeline.manifest().stages.empty());
}

TEST_CASE("single stages demand their upstream artifacts") {
    const fs::path out = fresh_dir("ordering");
    ExperimentConfig cfg = tiny_config(7, out);

    CHECK_THROWS_AS(Pipeline(cfg, RunOptions{}).explain(), MissingArtifact);
    CHECK_THROWS_AS(Pipeline(cfg, RunOptions{}).evaluate(), MissingArtifact);
    CHECK_THROWS_AS(Pipeline(cfg, RunOptions{}).report(), MissingArtifact);

    Pipeline(cfg, RunOptions{}).generate();
    CHECK(fs::exists(out / "event" / "train.jsonl"));
    CHECK_THROWS_AS(Pipeline(cfg, RunOptions{}).explain(), MissingArtifact);  // no models yet

    Pipeline(cfg, RunOptions{}).train();
    CHECK(fs::exists(out / "event" / "lstm-self.json"));
    CHECK_THROWS_AS(Pipeline(cfg, RunOptions{}).evaluate(), MissingArtifact);  // no attributions

    Pipeline(cfg, RunOptions{}).explain();
    Pipeline(cfg, RunOptions{}).evaluate();
    Pipeline(cfg, RunOptions{}).report();
    CHECK(fs::exists(out / "report" / "auc_summary.csv"));
    CHECK(!fs::exists(out / "sequence"));  // single-stage path covers one mode
}

TEST_CASE("limit overrides flow through explain and bind evaluate") {
    const fs::path out = fresh_dir("limit");
    ExperimentConfig cfg = tiny_config(9, out);
    cfg.evaluation.tracking = false;
    cfg.methods = {{ModelKind::LstmDot, attrib::Method::Lrp}};

    RunOptions three;
    three.explain_limit = 3;
    Pipeline(cfg, three).generate();
    Pipeline(cfg, three).train();
    Pipeline(cfg, three).explain();
    CHECK(attributed_ids(out / "event" / "attr_test_lstm-dot.lrp.csv").size() == 3);
    Pipeline(cfg, three).evaluate();

    // With tracking off the history keeps the similarity column empty.
    std::ifstream hist(out / "event" / "lstm-dot_history.csv");
    std::string line;
    REQUIRE(std::getline(hist, line));
    CHECK(line == "model,epoch,auc,similarity");
    REQUIRE(std::getline(hist, line));
    CHECK(line.back() == ',');

    // Asking the default six observations of a three-observation sweep fails.
    RunOptions force_default;
    force_default.force = true;
    CHECK_THROWS_AS(Pipeline(cfg, force_default).evaluate(), MissingAttribution);
}

TEST_CASE("external dataset directories feed single stages but not all") {
    const fs::path source = fresh_dir("external_src");
    ExperimentConfig gen_cfg = tiny_config(4, source);
    Pipeline(gen_cfg, RunOptions{}).generate();

    const fs::path out = fresh_dir("external_out");
    ExperimentConfig cfg = tiny_config(4, out);
    cfg.dataset.external_path = (source / "event").string();
    cfg.evaluation.tracking = false;
    cfg.methods = {{ModelKind::Gbt, attrib::Method::KernelShap}};

    CHECK_THROWS_AS(Pipeline(cfg, RunOptions{}).run_all(), ConfigError);
    CHECK_THROWS_AS(Pipeline(cfg, RunOptions{}).generate(), ConfigError);

    Pipeline(cfg, RunOptions{}).train();
    CHECK(fs::exists(out / "event" / "gbt.json"));
    Pipeline(cfg, RunOptions{}).explain();
    Pipeline(cfg, RunOptions{}).evaluate();
    CHECK(fs::exists(out / "event" / "local_similarity.csv"));
}

TEST_CASE("threaded explain matches the single-threaded artifacts") {
    const fs::path out_serial = fresh_dir("threads_serial");
    const fs::path out_pool = fresh_dir("threads_pool");
    ExperimentConfig cfg = tiny_config(8, out_serial);
    cfg.evaluation.tracking = false;
    cfg.methods = {{ModelKind::Gbt, attrib::Method::KernelShap},
                   {ModelKind::LstmDot, attrib::Method::KernelShap}};

    Pipeline(cfg, RunOptions{}).generate();
    Pipeline(cfg, RunOptions{}).train();
    RunOptions serial;
    serial.threads = 1;
    Pipeline(cfg, serial).explain();

    cfg.output_dir = out_pool.string();
    Pipeline(cfg, RunOptions{}).generate();
    Pipeline(cfg, RunOptions{}).train();
    RunOptions pool;
    pool.threads = 4;
    Pipeline(cfg, pool).explain();

    for (const char* rel :
         {"event/attr_test_gbt.kernel_shap.csv", "event/attr_test_lstm-dot.kernel_shap.csv"})
        CHECK(slurp(out_serial / rel) == slurp(out_pool / rel));
}

#ifdef XPBENCH_BIN
namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(XPBENCH_BIN) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return (status >> 8) & 0xff;
}

}  // namespace

TEST_CASE("command line maps outcomes to exit codes") {
    const fs::path dir = fresh_dir("cli");
    fs::create_directories(dir);
    write_file(dir / "tiny.json", R"({
        "version": 1,
        "seed": 11,
        "dataset": {"counts": {"train": 180, "validation": 60, "test": 60}},
        "gbt": {"rounds": 8, "checkpoint_interval": 4},
        "lstm": {"epochs": 2},
        "attribution": {"coalition_samples": 128, "background_size": 16,
                        "tracking_coalitions": 128, "tracking_background": 4},
        "evaluation": {"subsample": 6, "explain_limit": 6}
    })");
    write_file(dir / "incompatible.json",
               R"({"version": 1, "methods": ["gbt.lrp"]})");

    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("") == 2);
    CHECK(run_cli("generate --no-such-flag") == 2);
    CHECK(run_cli("generate --config " + (dir / "absent.json").string()) == 2);
    CHECK(run_cli("generate --config " + (dir / "incompatible.json").string()) == 2);
    CHECK(run_cli("explain --limit 0 --out " + (dir / "out").string()) == 2);
    CHECK(run_cli("evaluate --out " + (dir / "empty").string()) == 3);
    const std::string common =
        " --config " + (dir / "tiny.json").string() + " --out " + (dir / "out").string();
    {
        const std::string cmd = "XPB_THREADS=abc " + std::string(XPBENCH_BIN) + " generate" +
                                common + " > /dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        REQUIRE(status != -1);
        CHECK(((status >> 8) & 0xff) == 2);
    }

    CHECK(run_cli("all" + common) == 0);
    CHECK(fs::exists(dir / "out" / "report" / "auc_summary.csv"));
    CHECK(run_cli("evaluate" + common) == 0);
}
#endif
