// Command-line front end for the benchmark pipeline. Subcommands map to
// pipeline stages; `all` reproduces the full two-dataset study.
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "xpb/config.hpp"
#include "xpb/errors.hpp"
#include "xpb/pipeline.hpp"

namespace {

struct CliOptions {
    std::optional<std::string> config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<int> limit;
    bool force = false;
    bool svg = false;
};

void add_common_flags(CLI::App* cmd, CliOptions& opts) {
    cmd->add_option("--config", opts.config_path, "experiment config JSON (defaults built in)");
    cmd->add_option("--seed", opts.seed, "master seed override");
    cmd->add_option("--out", opts.out_dir, "output directory override");
    cmd->add_option("--limit", opts.limit, "observations to attribute per split (-1 for all)");
    cmd->add_flag("--force", opts.force, "rerun stages the manifest marks complete");
    cmd->add_flag("--svg", opts.svg, "emit plot SVGs with the report");
}

int explain_threads() {
    int threads = static_cast<int>(std::thread::hardware_concurrency());
    if (threads < 1) threads = 1;
    if (const char* env = std::getenv("XPB_THREADS")) {
        char* end = nullptr;
        const long parsed = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || parsed < 1)
            throw xpb::ConfigError("XPB_THREADS must be a positive integer");
        threads = static_cast<int>(parsed);
    }
    return threads;
}

int run_stage(const std::string& stage, const CliOptions& opts) {
    xpb::harness::ExperimentConfig config = opts.config_path
                                                ? xpb::harness::load_config(*opts.config_path)
                                                : xpb::harness::default_config();
    if (opts.seed) config.seed = *opts.seed;
    if (opts.out_dir) config.output_dir = *opts.out_dir;
    if (opts.limit && *opts.limit != -1 && *opts.limit < 1)
        throw xpb::ConfigError("--limit must be positive or -1 for all");

    xpb::harness::RunOptions run;
    run.force = opts.force;
    run.svg = opts.svg;
    if (opts.limit) run.explain_limit = *opts.limit;
    run.threads = explain_threads();

    xpb::harness::Pipeline pipeline(std::move(config), run);
    if (stage == "generate") pipeline.generate();
    else if (stage == "train") pipeline.train();
    else if (stage == "explain") pipeline.explain();
    else if (stage == "evaluate") pipeline.evaluate();
    else if (stage == "report") pipeline.report();
    else pipeline.run_all();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"explainability benchmark workbench"};
    app.require_subcommand(1);

    CliOptions opts;
    std::string stage;
    for (const auto& [name, help] :
         {std::pair<const char*, const char*>{"generate", "synthesize the dataset splits"},
          {"train", "fit the configured models"},
          {"explain", "attribute test observations for every method binding"},
          {"evaluate", "score attributions against ground truth"},
          {"report", "assemble summary tables and curves"},
          {"all", "full study: both dataset modes end to end, then the report"}}) {
        CLI::App* cmd = app.add_subcommand(name, help);
        add_common_flags(cmd, opts);
        cmd->callback([&stage, name = std::string(name)] { stage = name; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // usage problems are config errors
    }

    try {
        return run_stage(stage, opts);
    } catch (const xpb::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const xpb::SchemaError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const xpb::ParseError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const xpb::IncompatibleMethod& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const xpb::UnknownPathway& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const xpb::MissingArtifact& e) {
        std::cerr << "missing artifact: " << e.what() << '\n';
        return 3;
    } catch (const xpb::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 4;
    } catch (const xpb::UndefinedMetric& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 4;
    } catch (const xpb::EvaluationError& e) {
        std::cerr << "evaluation failure: " << e.what() << '\n';
        return 5;
    } catch (const xpb::MissingAttribution& e) {
        std::cerr << "evaluation failure: " << e.what() << '\n';
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
